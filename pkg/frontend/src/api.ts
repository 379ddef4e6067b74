/** Typed client for the session service HTTP API.
 *
 * The panel never computes kinematics: every number it displays comes out
 * of one of these payloads.
 */

import type { CloudPayload } from "./payload.js";

export interface SessionState {
  session_id: string;
  hand: string;
  side: string;
  frame: number;
  n_frames: number;
  offset: number[];
  dirty: boolean;
  converged: boolean;
  rms: number;
  iters_used: number;
  residuals: number[];
  fingertips: string[];
  targets: number[][];
  clamped_joints: string[];
  scene_cloud: CloudPayload | null;
  hand_cloud: CloudPayload | null;
}

export interface ProfileDoc {
  dataset_id: string;
  hand_id: string;
  offset: { xyz: number[]; rpy: number[] };
  notes: string;
}

export interface SolveSummary {
  convergence_rate: number;
  converged: boolean[];
  rms: number[];
}

export interface OpenReply {
  session_id: string;
  state: SessionState;
}

export interface SolveReply {
  summary: SolveSummary;
  state: SessionState;
}

export interface ProfileReply {
  profile: ProfileDoc;
  path: string;
}

/** The service answered with an error status ({"error": ...} body). */
export class ServiceError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

/** The service could not be reached at all (fetch rejected). */
export class ConnectionLost extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConnectionLost";
  }
}

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export interface OpenOptions {
  profile?: string;
  maxIters?: number;
}

export class SessionClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    public readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers: body === undefined ? undefined : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new ConnectionLost(`${method} ${path}: ${String(err)}`);
    }
    let doc: unknown = null;
    try {
      doc = await resp.json();
    } catch {
      // non-JSON body; fall through to the status check
    }
    if (!resp.ok) {
      const message =
        doc !== null && typeof doc === "object" && "error" in doc
          ? String((doc as { error: unknown }).error)
          : `HTTP ${resp.status}`;
      throw new ServiceError(resp.status, message);
    }
    return doc as T;
  }

  open(recording: string, hand: string, opts: OpenOptions = {}): Promise<OpenReply> {
    const body: Record<string, unknown> = { recording, hand };
    if (opts.profile !== undefined) {
      body["profile"] = opts.profile;
    }
    if (opts.maxIters !== undefined) {
      body["max_iters"] = opts.maxIters;
    }
    return this.request<OpenReply>("POST", "/session", body);
  }

  state(id: string): Promise<SessionState> {
    return this.request<SessionState>("GET", `/session/${id}/state`);
  }

  async setOffset(id: string, offset: number[]): Promise<SessionState> {
    const reply = await this.request<{ state: SessionState }>(
      "PUT",
      `/session/${id}/offset`,
      { offset },
    );
    return reply.state;
  }

  async stepFrame(id: string, delta: number): Promise<SessionState> {
    const reply = await this.request<{ state: SessionState }>(
      "POST",
      `/session/${id}/frame`,
      { delta },
    );
    return reply.state;
  }

  solveAll(id: string): Promise<SolveReply> {
    return this.request<SolveReply>("POST", `/session/${id}/solve-all`);
  }

  saveProfile(id: string, store: string): Promise<ProfileReply> {
    return this.request<ProfileReply>("POST", `/session/${id}/profile`, { store });
  }

  async close(id: string): Promise<void> {
    await this.request<{ closed: string }>("DELETE", `/session/${id}`);
  }
}
