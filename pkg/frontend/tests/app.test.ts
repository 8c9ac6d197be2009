import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { App } from "../src/app.js";

const TRIALS = [
  { trial_id: "P000-t00", participant_id: "P000", activity: "OvergroundWalk", duration_s: 10.0 },
  { trial_id: "P000-t01", participant_id: "P000", activity: "QuietStanding", duration_s: 8.5 },
  { trial_id: "P001-t00", participant_id: "P001", activity: "TimedUpAndGo", duration_s: 12.2 },
];

const DETAIL = {
  trial_id: "P000-t00", participant_id: "P000", activity: "OvergroundWalk",
  duration_s: 10.0, tokens: [1, 5, 9, 1],
  joint_traces: {
    stride: 4, frame_rate_hz: 30,
    channels: ["hip_flexion_l", "hip_flexion_r"],
    data: [[0.1, -0.1], [0.2, -0.2], [0.1, -0.1]],
  },
};

type Handler = (init?: RequestInit) => { status?: number; body: unknown };

function fetchStub(handlers: Record<string, Handler>): typeof fetch {
  return async (url, init) => {
    const path = String(url).replace(/^https?:\/\/[^/]+/, "");
    const handler = handlers[path];
    if (!handler) return new Response("{}", { status: 404 });
    const { status = 200, body } = handler(init);
    return new Response(JSON.stringify(body), { status });
  };
}

function makeApp(handlers: Record<string, Handler>): App {
  document.body.innerHTML = '<div id="root"></div>';
  const client = new ApiClient("", fetchStub(handlers));
  return new App(document.getElementById("root") as HTMLElement, client);
}

const baseHandlers: Record<string, Handler> = {
  "/api/trials": () => ({ body: TRIALS }),
  "/api/trials/P000-t00": () => ({ body: DETAIL }),
  "/api/trials/P000-t01": () => ({ body: { ...DETAIL, trial_id: "P000-t01", joint_traces: null } }),
  "/api/chat": () => ({ body: { reply: "Overground walking", intent: "Activity", backend: "mock" } }),
};

describe("App", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("renders the trial list", async () => {
    const app = makeApp(baseHandlers);
    await app.init();
    const items = document.querySelectorAll(".trial-item");
    expect(items).toHaveLength(3);
    expect(items[0].textContent).toContain("P000-t00");
    expect(items[0].textContent).toContain("OvergroundWalk");
  });

  it("shows an empty state for an empty service", async () => {
    const app = makeApp({ ...baseHandlers, "/api/trials": () => ({ body: [] }) });
    await app.init();
    expect(document.querySelector(".empty-state")?.textContent).toContain("No trials");
  });

  it("malformed response yields an error state with a retry control, no crash", async () => {
    let calls = 0;
    const app = makeApp({
      ...baseHandlers,
      "/api/trials": () => {
        calls += 1;
        return calls === 1 ? { body: [{ nope: true }] } : { body: TRIALS };
      },
    });
    await app.init();
    const errorBox = document.querySelector('[data-testid="trial-error"]');
    expect(errorBox).not.toBeNull();
    const retry = errorBox?.querySelector("button.retry") as HTMLButtonElement;
    expect(retry).not.toBeNull();
    retry.click();
    await new Promise((r) => setTimeout(r, 0));
    expect(document.querySelectorAll(".trial-item")).toHaveLength(3);
  });

  it("selecting a trial renders traces and token strip and enables input", async () => {
    const app = makeApp(baseHandlers);
    await app.init();
    await app.select("P000-t00");
    expect(document.querySelector(".trace-svg")).not.toBeNull();
    expect(document.querySelectorAll(".token-cell")).toHaveLength(4);
    const input = document.querySelector(".composer input") as HTMLInputElement;
    expect(input.disabled).toBe(false);
  });

  it("sends a chat message and renders the reply from the API body", async () => {
    const app = makeApp(baseHandlers);
    await app.init();
    await app.select("P000-t00");
    const input = document.querySelector(".composer input") as HTMLInputElement;
    input.value = "What is this person doing?";
    await app.send();
    const bubbles = [...document.querySelectorAll(".bubble")];
    expect(bubbles.map((b) => b.className)).toEqual(["bubble bubble-user", "bubble bubble-model"]);
    expect(bubbles[1].textContent).toBe("Overground walking");
  });

  it("disables the composer while a request is in flight", async () => {
    let release: (value: unknown) => void = () => undefined;
    const gate = new Promise((r) => (release = r));
    // slow chat endpoint: reply only after the gate opens
    const slowFetch: typeof fetch = async (url, init) => {
      const path = String(url).replace(/^https?:\/\/[^/]+/, "");
      if (path === "/api/chat") {
        await gate;
        return new Response(JSON.stringify({ reply: "ok", intent: "Activity", backend: "mock" }));
      }
      return fetchStub(baseHandlers)(url, init);
    };
    document.body.innerHTML = '<div id="root"></div>';
    const app = new App(document.getElementById("root") as HTMLElement,
      new ApiClient("", slowFetch));
    await app.init();
    await app.select("P000-t00");
    const input = document.querySelector(".composer input") as HTMLInputElement;
    input.value = "hello there friend";
    const pending = app.send();
    expect(input.disabled).toBe(true);
    expect(document.querySelector(".bubble-pending")).not.toBeNull();
    release(null);
    await pending;
    expect(input.disabled).toBe(false);
  });

  it("upstream 502 renders an error bubble and preserves the thread", async () => {
    let fail = false;
    const app = makeApp({
      ...baseHandlers,
      "/api/chat": () =>
        fail
          ? { status: 502, body: { detail: "upstream failure" } }
          : { body: { reply: "Overground walking", intent: "Activity", backend: "mock" } },
    });
    await app.init();
    await app.select("P000-t00");
    const input = document.querySelector(".composer input") as HTMLInputElement;
    input.value = "What is this person doing?";
    await app.send();
    fail = true;
    input.value = "And how fast?";
    await app.send();
    const bubbles = [...document.querySelectorAll(".bubble")];
    expect(bubbles.map((b) => b.className)).toEqual([
      "bubble bubble-user", "bubble bubble-model",
      "bubble bubble-user", "bubble bubble-error",
    ]);
    expect(bubbles[3].textContent).toContain("502");
    // prior messages intact
    expect(bubbles[1].textContent).toBe("Overground walking");
  });

  it("switching trials resets the thread", async () => {
    const app = makeApp(baseHandlers);
    await app.init();
    await app.select("P000-t00");
    const input = document.querySelector(".composer input") as HTMLInputElement;
    input.value = "What is this person doing?";
    await app.send();
    expect(document.querySelectorAll(".bubble")).toHaveLength(2);
    await app.select("P000-t01");
    expect(document.querySelectorAll(".bubble")).toHaveLength(0);
  });
});
