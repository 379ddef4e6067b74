/** Panel state machine: one session per store, single source of truth.
 *
 * Every displayed number originates from a service payload.  Slider input
 * is shown optimistically, debounced into PUT /offset requests with
 * in-flight coalescing (latest offset wins), and rolled back to the last
 * acknowledged server state when the service rejects it.  Operations never
 * reject; failures land in `view.banner` and return null/false.
 */

import {
  ConnectionLost,
  ServiceError,
  SessionClient,
} from "./api.js";
import type {
  OpenOptions,
  ProfileReply,
  SessionState,
} from "./api.js";
import { debounce, type Debounced } from "./debounce.js";

export interface ResidualRow {
  tip: string;
  value: number;
}

export interface ViewState {
  sessionId: string | null;
  /** What the six offset controls show (optimistic). */
  sliders: number[];
  /** Last offset acknowledged by the service. */
  offset: number[];
  frame: number;
  nFrames: number;
  dirty: boolean;
  converged: boolean;
  rms: number;
  itersUsed: number;
  residuals: ResidualRow[];
  clampedJoints: string[];
  /** Convergence rate of the last solve-all, if any. */
  solveRate: number | null;
  /** Where the last save-profile landed, if any. */
  savedPath: string | null;
  connected: boolean;
  busy: boolean;
  banner: string | null;
  /** Last full render payload (clouds and targets for the 3D view). */
  payload: SessionState | null;
}

export type Listener = (view: ViewState) => void;

interface BindArgs {
  recording: string;
  hand: string;
  opts: OpenOptions;
}

function zeros6(): number[] {
  return [0, 0, 0, 0, 0, 0];
}

function sameVec(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

export class PanelStore {
  readonly view: ViewState = {
    sessionId: null,
    sliders: zeros6(),
    offset: zeros6(),
    frame: 0,
    nFrames: 0,
    dirty: false,
    converged: false,
    rms: NaN,
    itersUsed: 0,
    residuals: [],
    clampedJoints: [],
    solveRate: null,
    savedPath: null,
    connected: true,
    busy: false,
    banner: null,
    payload: null,
  };

  private readonly listeners = new Set<Listener>();
  private readonly submitOffset: Debounced<[number[]]>;
  private bindArgs: BindArgs | null = null;
  private queuedOffset: number[] | null = null;
  private senderQueued = false;
  private jobs = 0;
  private tail: Promise<void> = Promise.resolve();

  constructor(
    private readonly client: SessionClient,
    debounceMs = 100,
  ) {
    this.submitOffset = debounce(
      (vals: number[]) => this.scheduleOffset(vals),
      debounceMs,
    );
  }

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    listener(this.view);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.view);
    }
  }

  // -- session lifecycle ----------------------------------------------------

  async bind(
    recording: string,
    hand: string,
    opts: OpenOptions = {},
  ): Promise<boolean> {
    this.bindArgs = { recording, hand, opts };
    return this.enqueue(async () => {
      try {
        const reply = await this.client.open(recording, hand, opts);
        this.view.sessionId = reply.session_id;
        this.view.banner = null;
        this.view.solveRate = null;
        this.view.savedPath = null;
        this.acknowledge(reply.state);
        return true;
      } catch (err) {
        this.absorb(err, "open session");
        return false;
      }
    });
  }

  /** Reopen the same recording/hand with a new iteration budget, keeping
   * the current offset (IK config is fixed at session open). */
  async setMaxIters(maxIters: number): Promise<boolean> {
    const args = this.bindArgs;
    if (args === null) {
      return false;
    }
    args.opts = { ...args.opts, maxIters };
    return this.enqueue(async () => {
      const keep = [...this.view.sliders];
      const old = this.view.sessionId;
      try {
        if (old !== null) {
          await this.client.close(old).catch(() => undefined);
        }
        const reply = await this.client.open(args.recording, args.hand, args.opts);
        this.view.sessionId = reply.session_id;
        this.view.banner = null;
        this.acknowledge(reply.state);
        if (!sameVec(keep, this.view.offset)) {
          this.acknowledge(await this.client.setOffset(reply.session_id, keep));
        }
        return true;
      } catch (err) {
        this.absorb(err, "reopen session");
        return false;
      }
    });
  }

  async close(): Promise<void> {
    await this.enqueue(async () => {
      const id = this.view.sessionId;
      if (id === null) {
        return;
      }
      try {
        await this.client.close(id);
      } catch (err) {
        this.absorb(err, "close session");
        return;
      }
      this.view.sessionId = null;
      this.emit();
    });
  }

  /** Re-pull GET /state; also the reconnect path after a connection loss. */
  async refresh(): Promise<boolean> {
    return this.enqueue(async () => {
      const id = this.view.sessionId;
      if (id === null) {
        return false;
      }
      try {
        this.acknowledge(await this.client.state(id));
        this.view.connected = true;
        this.view.banner = null;
        this.emit();
        return true;
      } catch (err) {
        this.absorb(err, "refresh");
        return false;
      }
    });
  }

  // -- offset sliders ---------------------------------------------------------

  /** Optimistic slider input; the request side is debounced and coalesced. */
  moveSlider(index: number, value: number): void {
    if (!this.view.connected || this.view.sessionId === null) {
      return;
    }
    if (index < 0 || index >= 6 || !Number.isFinite(value)) {
      return;
    }
    this.view.sliders[index] = value;
    this.emit();
    this.submitOffset([...this.view.sliders]);
  }

  /** Send a pending slider value now (wired to slider release). */
  flushOffset(): void {
    this.submitOffset.flush();
  }

  private scheduleOffset(vals: number[]): void {
    this.queuedOffset = vals;
    if (this.senderQueued) {
      return; // an enqueued sender will pick up the newest value
    }
    this.senderQueued = true;
    void this.enqueue(async () => {
      this.senderQueued = false;
      const send = this.queuedOffset;
      this.queuedOffset = null;
      const id = this.view.sessionId;
      if (send === null || id === null) {
        return;
      }
      if (sameVec(send, this.view.offset)) {
        return; // identical input; the loop is idempotent
      }
      try {
        this.acknowledge(await this.client.setOffset(id, send));
      } catch (err) {
        // roll the controls back to the acknowledged state on any failure
        this.view.sliders = [...this.view.offset];
        if (err instanceof ServiceError) {
          this.view.banner = `offset rejected: ${err.message}`;
          this.emit();
          // re-sync: the service may retain the offset even when the solve fails
          await this.resync(id);
        } else {
          this.absorb(err, "set offset");
        }
      }
    });
  }

  private async resync(id: string): Promise<void> {
    try {
      this.acknowledge(await this.client.state(id));
    } catch (err) {
      if (err instanceof ConnectionLost) {
        this.absorb(err, "refresh");
      }
      // a failed re-sync keeps the rolled-back view; nothing else to do
    }
  }

  // -- frame scrubber / solve / profile ---------------------------------------

  async stepFrame(delta: number): Promise<boolean> {
    return this.enqueue(() => this.stepInternal(() => delta));
  }

  async goToFrame(target: number): Promise<boolean> {
    return this.enqueue(() => this.stepInternal(() => target - this.view.frame));
  }

  private async stepInternal(delta: () => number): Promise<boolean> {
    const id = this.view.sessionId;
    if (id === null || !this.view.connected) {
      return false;
    }
    try {
      this.acknowledge(await this.client.stepFrame(id, delta()));
      return true;
    } catch (err) {
      this.absorb(err, "step frame");
      return false;
    }
  }

  async solveAll(): Promise<boolean> {
    return this.enqueue(async () => {
      const id = this.view.sessionId;
      if (id === null || !this.view.connected) {
        return false;
      }
      try {
        const reply = await this.client.solveAll(id);
        this.view.solveRate = reply.summary.convergence_rate;
        this.acknowledge(reply.state);
        return true;
      } catch (err) {
        this.absorb(err, "solve all");
        return false;
      }
    });
  }

  async saveProfile(store: string): Promise<ProfileReply | null> {
    return this.enqueue(async () => {
      const id = this.view.sessionId;
      if (id === null || !this.view.connected) {
        return null;
      }
      try {
        const reply = await this.client.saveProfile(id, store);
        this.view.savedPath = reply.path;
        this.view.banner = null;
        this.emit();
        return reply;
      } catch (err) {
        this.absorb(err, "save profile");
        return null;
      }
    });
  }

  // -- test/support helpers ---------------------------------------------------

  /** Resolve once no debounce, queued offset, or in-flight request remains. */
  async settle(): Promise<void> {
    for (;;) {
      this.submitOffset.flush();
      await this.tail;
      if (
        !this.submitOffset.pending() &&
        this.queuedOffset === null &&
        this.jobs === 0
      ) {
        return;
      }
    }
  }

  // -- internals ----------------------------------------------------------------

  /** All mutating traffic runs through one chain: at most one request in
   * flight, so acknowledgements apply in send order. */
  private enqueue<T>(job: () => Promise<T>): Promise<T> {
    this.jobs += 1;
    this.view.busy = true;
    this.emit();
    const run = this.tail.then(job);
    this.tail = run
      .then(
        () => undefined,
        () => undefined,
      )
      .then(() => {
        this.jobs -= 1;
        if (this.jobs === 0) {
          this.view.busy = false;
          this.emit();
        }
      });
    return run;
  }

  private hasPendingInput(): boolean {
    return this.submitOffset.pending() || this.queuedOffset !== null;
  }

  private acknowledge(state: SessionState): void {
    this.view.offset = [...state.offset];
    if (!this.hasPendingInput()) {
      this.view.sliders = [...state.offset];
    }
    this.view.frame = state.frame;
    this.view.nFrames = state.n_frames;
    this.view.dirty = state.dirty;
    this.view.converged = state.converged;
    this.view.rms = state.rms;
    this.view.itersUsed = state.iters_used;
    this.view.residuals = state.fingertips.map((tip, i) => ({
      tip,
      value: state.residuals[i] ?? NaN,
    }));
    this.view.clampedJoints = [...state.clamped_joints];
    this.view.payload = state;
    this.view.connected = true;
    this.emit();
  }

  private absorb(err: unknown, what: string): void {
    if (err instanceof ConnectionLost) {
      this.view.connected = false;
      this.view.banner = "service unreachable — panel is read-only";
    } else if (err instanceof ServiceError) {
      this.view.banner = `${what}: ${err.message}`;
    } else {
      this.view.banner = `${what}: ${String(err)}`;
    }
    this.emit();
  }
}
