/** Typed client for the chat service HTTP API. */

import {
  Validator,
  ValidationError,
  arrayOf,
  isNumber,
  isString,
  nullable,
  object,
} from "./validate.js";

export interface TrialListItem {
  trial_id: string;
  participant_id: string;
  activity: string;
  duration_s: number;
  [key: string]: unknown;
}

export interface JointTraces {
  stride: number;
  frame_rate_hz: number;
  channels: string[];
  data: number[][];
  [key: string]: unknown;
}

export interface TrialDetail {
  trial_id: string;
  participant_id: string;
  activity: string;
  duration_s: number;
  tokens: number[];
  joint_traces: JointTraces | null;
  [key: string]: unknown;
}

export interface ChatReply {
  reply: string;
  intent: string;
  backend: string;
  [key: string]: unknown;
}

export interface ChatTurn {
  role: "user" | "model";
  text: string;
}

const trialListItem = object<TrialListItem>({
  trial_id: isString,
  participant_id: isString,
  activity: isString,
  duration_s: isNumber,
});

const jointTraces = object<JointTraces>({
  stride: isNumber,
  frame_rate_hz: isNumber,
  channels: arrayOf(isString),
  data: arrayOf(arrayOf(isNumber)),
});

const trialDetail = object<TrialDetail>({
  trial_id: isString,
  participant_id: isString,
  activity: isString,
  duration_s: isNumber,
  tokens: arrayOf(isNumber),
  joint_traces: nullable(jointTraces),
});

const chatReply = object<ChatReply>({
  reply: isString,
  intent: isString,
  backend: isString,
});

export class ApiError extends Error {
  constructor(message: string, readonly status: number | null = null) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, validator: Validator<T>, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`network failure: ${(err as Error).message}`);
    }
    if (!response.ok) {
      throw new ApiError(`request failed with status ${response.status}`, response.status);
    }
    let payload: unknown;
    try {
      payload = await response.json();
    } catch {
      throw new ApiError("response is not JSON", response.status);
    }
    try {
      return validator(payload);
    } catch (err) {
      if (err instanceof ValidationError) throw new ApiError(err.message, response.status);
      throw err;
    }
  }

  fetchTrials(): Promise<TrialListItem[]> {
    return this.request("/api/trials", arrayOf(trialListItem));
  }

  fetchTrialDetail(trialId: string): Promise<TrialDetail> {
    return this.request(`/api/trials/${encodeURIComponent(trialId)}`, trialDetail);
  }

  sendChat(trialId: string, message: string, history: ChatTurn[]): Promise<ChatReply> {
    return this.request("/api/chat", chatReply, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ trial_id: trialId, message, history }),
    });
  }

  async health(): Promise<boolean> {
    try {
      await this.request("/healthz", object<{ status: string }>({ status: isString }));
      return true;
    } catch {
      return false;
    }
  }
}
