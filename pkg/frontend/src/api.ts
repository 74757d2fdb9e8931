/** Thin fetch client for the verification service. */

import type {
  AppliedVerdict,
  StatusPayload,
  TaskPayload,
  VerdictBody,
} from "./types.js";
import { serializeVerdict } from "./verdicts.js";

export interface ApiClient {
  /** Service origin, e.g. "http://localhost:8000". No trailing slash. */
  baseUrl: string;
  /** Sent as X-Session-Id; the server allows one outstanding task per id. */
  sessionId: string;
}

export class ApiError extends Error {
  status: number;
  detail: string;

  constructor(status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
    this.status = status;
    this.detail = detail;
  }
}

/** What GET /tasks/next can come back with, flattened into one union. */
export type NextTaskResult =
  | { kind: "task"; task: TaskPayload }
  | { kind: "drained"; detail: string }
  | { kind: "waiting"; detail: string }
  | { kind: "budget"; detail: string };

export function makeClient(baseUrl: string, sessionId: string): ApiClient {
  return { baseUrl: baseUrl.replace(/\/+$/, ""), sessionId };
}

async function detailOf(resp: Response): Promise<string> {
  try {
    const doc = (await resp.json()) as { detail?: string };
    return typeof doc.detail === "string" ? doc.detail : resp.statusText;
  } catch {
    return resp.statusText;
  }
}

export async function fetchNextTask(client: ApiClient): Promise<NextTaskResult> {
  const resp = await fetch(`${client.baseUrl}/api/v1/tasks/next`, {
    headers: { "X-Session-Id": client.sessionId },
  });
  if (resp.ok) {
    return { kind: "task", task: (await resp.json()) as TaskPayload };
  }
  const detail = await detailOf(resp);
  if (resp.status === 410) {
    return { kind: "budget", detail };
  }
  if (resp.status === 404) {
    // same status for a drained queue and for "come back later"; the
    // server distinguishes them only in the detail text
    if (detail.includes("outstanding")) {
      return { kind: "waiting", detail };
    }
    return { kind: "drained", detail };
  }
  throw new ApiError(resp.status, detail);
}

export async function postVerdict(
  client: ApiClient,
  taskId: string,
  body: VerdictBody,
): Promise<AppliedVerdict> {
  const resp = await fetch(
    `${client.baseUrl}/api/v1/tasks/${encodeURIComponent(taskId)}/verdict`,
    {
      method: "POST",
      headers: {
        "Content-Type": "application/json",
        "X-Session-Id": client.sessionId,
      },
      body: serializeVerdict(body),
    },
  );
  if (!resp.ok) {
    throw new ApiError(resp.status, await detailOf(resp));
  }
  return (await resp.json()) as AppliedVerdict;
}

export async function fetchStatus(client: ApiClient): Promise<StatusPayload> {
  const resp = await fetch(`${client.baseUrl}/api/v1/status`);
  if (!resp.ok) {
    throw new ApiError(resp.status, await detailOf(resp));
  }
  return (await resp.json()) as StatusPayload;
}
