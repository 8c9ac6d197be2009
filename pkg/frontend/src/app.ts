/**
 * Application wiring: trial browser on the left, trace/token inspector and
 * chat thread on the right. The UI performs no inference of its own; every
 * reply string comes verbatim from the chat API response body.
 */

import { ApiClient, ApiError, TrialDetail, TrialListItem } from "./api.js";
import { renderTraceChart } from "./chart.js";
import { renderTokenStrip } from "./tokenstrip.js";
import {
  ThreadState,
  addError,
  addModelReply,
  addUserMessage,
  canSend,
  emptyThread,
  historyForApi,
  selectTrial,
} from "./thread.js";

export class App {
  thread: ThreadState = emptyThread();
  private trialList: HTMLElement;
  private trialView: HTMLElement;
  private threadEl: HTMLElement;
  private input: HTMLInputElement;
  private sendButton: HTMLButtonElement;

  constructor(
    root: HTMLElement,
    private readonly client: ApiClient,
  ) {
    root.innerHTML = `
      <div class="app">
        <aside class="sidebar">
          <h2>Trials</h2>
          <div class="trial-list" data-testid="trial-list"></div>
        </aside>
        <main class="main">
          <section class="trial-view" data-testid="trial-view">
            <p class="placeholder">Select a trial to inspect it.</p>
          </section>
          <section class="chat">
            <div class="thread" data-testid="thread"></div>
            <form class="composer">
              <input type="text" placeholder="Ask about this motion..."
                     aria-label="message" disabled />
              <button type="submit" disabled>Send</button>
            </form>
          </section>
        </main>
      </div>`;
    this.trialList = root.querySelector(".trial-list") as HTMLElement;
    this.trialView = root.querySelector(".trial-view") as HTMLElement;
    this.threadEl = root.querySelector(".thread") as HTMLElement;
    this.input = root.querySelector(".composer input") as HTMLInputElement;
    this.sendButton = root.querySelector(".composer button") as HTMLButtonElement;

    const form = root.querySelector(".composer") as HTMLFormElement;
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.send();
    });
    this.input.addEventListener("input", () => this.syncComposer());
  }

  async init(): Promise<void> {
    this.trialList.textContent = "loading...";
    let trials: TrialListItem[];
    try {
      trials = await this.client.fetchTrials();
    } catch (err) {
      this.renderTrialError(err as Error);
      return;
    }
    this.renderTrialList(trials);
  }

  private renderTrialError(err: Error): void {
    this.trialList.innerHTML = "";
    const box = document.createElement("div");
    box.className = "error-state";
    box.setAttribute("data-testid", "trial-error");
    box.textContent = `Could not load trials: ${err.message}`;
    const retry = document.createElement("button");
    retry.textContent = "Retry";
    retry.className = "retry";
    retry.addEventListener("click", () => void this.init());
    box.appendChild(retry);
    this.trialList.appendChild(box);
  }

  private renderTrialList(trials: TrialListItem[]): void {
    this.trialList.innerHTML = "";
    if (trials.length === 0) {
      const empty = document.createElement("p");
      empty.className = "empty-state";
      empty.textContent = "No trials available.";
      this.trialList.appendChild(empty);
      return;
    }
    for (const trial of trials) {
      const button = document.createElement("button");
      button.className = "trial-item";
      button.dataset.trialId = trial.trial_id;
      button.textContent =
        `${trial.trial_id} - ${trial.activity} (${trial.duration_s.toFixed(1)} s)`;
      button.addEventListener("click", () => void this.select(trial.trial_id));
      this.trialList.appendChild(button);
    }
  }

  async select(trialId: string): Promise<void> {
    this.thread = selectTrial(this.thread, trialId);
    this.renderThread();
    for (const el of this.trialList.querySelectorAll(".trial-item")) {
      el.classList.toggle("selected", (el as HTMLElement).dataset.trialId === trialId);
    }
    this.trialView.textContent = "loading trial...";
    let detail: TrialDetail;
    try {
      detail = await this.client.fetchTrialDetail(trialId);
    } catch (err) {
      this.trialView.innerHTML = "";
      const box = document.createElement("div");
      box.className = "error-state";
      box.textContent = `Could not load trial: ${(err as Error).message}`;
      this.trialView.appendChild(box);
      this.syncComposer();
      return;
    }
    this.renderTrialDetail(detail);
    this.syncComposer();
  }

  private renderTrialDetail(detail: TrialDetail): void {
    this.trialView.innerHTML = "";
    const header = document.createElement("h3");
    header.textContent =
      `${detail.trial_id} - ${detail.activity} - participant ${detail.participant_id}`;
    this.trialView.appendChild(header);
    if (detail.joint_traces) {
      this.trialView.appendChild(renderTraceChart(detail.joint_traces).root);
    }
    const tokenHeader = document.createElement("p");
    tokenHeader.className = "token-count";
    tokenHeader.textContent = `${detail.tokens.length} motion tokens`;
    this.trialView.append(tokenHeader, renderTokenStrip(detail.tokens));
  }

  async send(): Promise<void> {
    const text = this.input.value.trim();
    if (!canSend(this.thread, text)) return;
    const history = historyForApi(this.thread);
    this.thread = addUserMessage(this.thread, text);
    this.input.value = "";
    this.renderThread();
    this.syncComposer();
    try {
      const reply = await this.client.sendChat(this.thread.trialId as string, text, history);
      this.thread = addModelReply(this.thread, reply.reply);
    } catch (err) {
      const status = err instanceof ApiError && err.status ? ` (status ${err.status})` : "";
      this.thread = addError(this.thread, `Upstream error${status}; try again.`);
    }
    this.renderThread();
    this.syncComposer();
  }

  renderThread(): void {
    this.threadEl.innerHTML = "";
    for (const bubble of this.thread.bubbles) {
      const el = document.createElement("div");
      el.className = `bubble bubble-${bubble.kind}`;
      el.textContent = bubble.text;
      this.threadEl.appendChild(el);
    }
    if (this.thread.inFlight) {
      const el = document.createElement("div");
      el.className = "bubble bubble-pending";
      el.textContent = "...";
      this.threadEl.appendChild(el);
    }
    this.threadEl.scrollTop = this.threadEl.scrollHeight;
  }

  syncComposer(): void {
    const selected = this.thread.trialId !== null;
    this.input.disabled = !selected || this.thread.inFlight;
    this.sendButton.disabled =
      !selected || this.thread.inFlight || this.input.value.trim().length === 0;
  }
}
