/** Chat thread state: one thread per selected trial, one request in flight. */

export type BubbleKind = "user" | "model" | "error";

export interface Bubble {
  kind: BubbleKind;
  text: string;
  timestamp: number;
}

export interface ThreadState {
  trialId: string | null;
  bubbles: Bubble[];
  inFlight: boolean;
}

export function emptyThread(trialId: string | null = null): ThreadState {
  return { trialId, bubbles: [], inFlight: false };
}

/** Selecting a different trial resets the thread: no cross-trial leakage. */
export function selectTrial(state: ThreadState, trialId: string): ThreadState {
  if (state.trialId === trialId) return state;
  return emptyThread(trialId);
}

export function addUserMessage(state: ThreadState, text: string, now = Date.now()): ThreadState {
  return {
    ...state,
    bubbles: [...state.bubbles, { kind: "user", text, timestamp: now }],
    inFlight: true,
  };
}

export function addModelReply(state: ThreadState, text: string, now = Date.now()): ThreadState {
  return {
    ...state,
    bubbles: [...state.bubbles, { kind: "model", text, timestamp: now }],
    inFlight: false,
  };
}

/** Upstream failures become an inline error bubble; the thread survives. */
export function addError(state: ThreadState, text: string, now = Date.now()): ThreadState {
  return {
    ...state,
    bubbles: [...state.bubbles, { kind: "error", text, timestamp: now }],
    inFlight: false,
  };
}

/** History payload for the API: error bubbles are UI-only. */
export function historyForApi(state: ThreadState): { role: "user" | "model"; text: string }[] {
  return state.bubbles
    .filter((b): b is Bubble & { kind: "user" | "model" } => b.kind !== "error")
    .map((b) => ({ role: b.kind as "user" | "model", text: b.text }));
}

export function canSend(state: ThreadState, text: string): boolean {
  return state.trialId !== null && !state.inFlight && text.trim().length > 0;
}
