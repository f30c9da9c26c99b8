/** Session state machine, UI-free.
 *
 * One pair on screen at a time, at most one in-flight submission, and the
 * server's per-session order as the only source of pair identity: the
 * machine advances by asking for the next pair, never by guessing. The
 * session id is the only thing kept outside this object (per-tab storage),
 * so a refresh resumes mid-session at the first unjudged pair.
 */

import { ApiClient, Choice, ConflictError, PairView } from "./api.js";

export type Phase = "loading" | "judging" | "submitting" | "done" | "failed";

export interface State {
  phase: Phase;
  sessionId: string | null;
  pair: PairView | null;
  selected: Choice | null;
  rationale: string;
  judged: number;
  total: number;
  /** own accuracy from the stats endpoint, set on the done screen */
  accuracy: number | null;
  /** transient user-facing note ("recovered after a conflict" etc) */
  notice: string;
}

/** Where the session id lives between refreshes (sessionStorage in the
 * browser, a plain object in tests). */
export interface IdStore {
  get(): string | null;
  set(id: string): void;
}

export class MemoryIdStore implements IdStore {
  private id: string | null = null;
  get(): string | null {
    return this.id;
  }
  set(id: string): void {
    this.id = id;
  }
}

type Listener = (state: State) => void;

export class SessionMachine {
  private api: ApiClient;
  private store: IdStore;
  private listeners: Listener[] = [];
  private shown = new Set<string>();
  state: State = {
    phase: "loading",
    sessionId: null,
    pair: null,
    selected: null,
    rationale: "",
    judged: 0,
    total: 0,
    accuracy: null,
    notice: "",
  };

  constructor(api: ApiClient, store: IdStore) {
    this.api = api;
    this.store = store;
  }

  subscribe(fn: Listener): void {
    this.listeners.push(fn);
    fn(this.state);
  }

  private emit(patch: Partial<State>): void {
    this.state = { ...this.state, ...patch };
    for (const fn of this.listeners) {
      fn(this.state);
    }
  }

  /** Resume the stored session or open a fresh one, then show a pair. */
  async start(): Promise<void> {
    try {
      let sessionId = this.store.get();
      if (sessionId === null) {
        const info = await this.api.openSession();
        sessionId = info.sessionId;
        this.store.set(sessionId);
      }
      this.emit({ sessionId });
      await this.advance();
    } catch (err) {
      this.emit({ phase: "failed", notice: String(err) });
    }
  }

  select(side: Choice): void {
    if (this.state.phase !== "judging") {
      return;
    }
    this.emit({ selected: side });
  }

  setRationale(text: string): void {
    if (this.state.phase !== "judging") {
      return;
    }
    this.emit({ rationale: text });
  }

  /** Post the current selection. No-op unless a side is chosen and
   * nothing is already in flight. */
  async submit(): Promise<void> {
    const { phase, selected, pair, sessionId } = this.state;
    if (phase !== "judging" || selected === null || pair === null || sessionId === null) {
      return;
    }
    this.emit({ phase: "submitting" });
    try {
      const progress = await this.api.submitJudgment(
        sessionId,
        pair.pairId,
        selected,
        this.state.rationale,
      );
      this.emit({ judged: progress.judged, total: progress.total, notice: "" });
    } catch (err) {
      if (err instanceof ConflictError) {
        // already recorded (lost ack, double tab): trust the server and move on
        this.emit({ notice: "already recorded; resynced with the server" });
      } else {
        this.emit({ phase: "judging", notice: String(err) });
        return;
      }
    }
    await this.advance();
  }

  /** Ask the server for the next unjudged pair; finish with own stats. */
  private async advance(): Promise<void> {
    try {
      const sessionId = this.state.sessionId as string;
      const pair = await this.api.nextPair(sessionId);
      if (pair === null) {
        const stats = await this.api.stats();
        const own = stats.perAnnotator.find((a) => a.sessionId === sessionId);
        this.emit({
          phase: "done",
          pair: null,
          selected: null,
          accuracy: own ? own.accuracy : null,
          judged: own ? own.n : this.state.judged,
        });
        return;
      }
      if (this.shown.has(pair.pairId)) {
        // the server must never hand a session the same pair twice
        this.emit({
          phase: "failed",
          notice: `pair ${pair.pairId} served twice in one session`,
        });
        return;
      }
      this.shown.add(pair.pairId);
      this.emit({
        phase: "judging",
        pair,
        selected: null,
        rationale: "",
        judged: pair.judged,
        total: pair.total,
      });
    } catch (err) {
      this.emit({ phase: "failed", notice: String(err) });
    }
  }
}
