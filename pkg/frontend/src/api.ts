/** Typed client for the judgment service.
 *
 * Every call goes through an injectable fetch so tests can fake the
 * transport and the node driver can prefix a host. Transport failures
 * (fetch rejecting) retry with exponential backoff, because a judgment
 * must never be dropped on a flaky connection; HTTP error statuses never
 * retry, the server has spoken. A lost acknowledgment therefore surfaces
 * on retry as a 409 duplicate, which callers treat as "already recorded".
 *
 * The pair payload carries titles and image URLs only. There is no field
 * here for scores or labels; the service does not send them for open
 * pairs and this client has nowhere to put them.
 */

export type Choice = "a" | "b";

export interface SideView {
  title: string;
  imageUrl: string;
}

export interface PairView {
  pairId: string;
  left: SideView;   // the service's "a" slot, shown on the left as-is
  right: SideView;  // the service's "b" slot
  judged: number;
  total: number;
}

export interface SessionInfo {
  sessionId: string;
  judged: number;
  total: number;
}

export interface Progress {
  judged: number;
  total: number;
}

export interface AnnotatorStats {
  sessionId: string;
  n: number;
  accuracy: number | null;
}

export interface Stats {
  nJudgments: number;
  accuracy: number | null;
  perAnnotator: AnnotatorStats[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** Duplicate judgment or unknown pair: the session moved on without us. */
export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export type FetchLike = (path: string, init?: RequestInit) => Promise<Response>;
export type Sleeper = (ms: number) => Promise<void>;

export interface ApiOptions {
  fetchFn?: FetchLike;
  sleep?: Sleeper;
  retries?: number;
  backoffMs?: number;
}

const realFetch: FetchLike = (path, init) => fetch(path, init);
const realSleep: Sleeper = (ms) => new Promise((resolve) => setTimeout(resolve, ms));

function errorText(body: unknown, status: number): string {
  if (typeof body === "object" && body !== null && "error" in body) {
    return String((body as { error: unknown }).error);
  }
  return `request failed with status ${status}`;
}

export class ApiClient {
  private fetchFn: FetchLike;
  private sleep: Sleeper;
  private retries: number;
  private backoffMs: number;

  constructor(opts: ApiOptions = {}) {
    this.fetchFn = opts.fetchFn ?? realFetch;
    this.sleep = opts.sleep ?? realSleep;
    this.retries = opts.retries ?? 4;
    this.backoffMs = opts.backoffMs ?? 250;
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let delay = this.backoffMs;
    for (let attempt = 0; ; attempt++) {
      let res: Response;
      try {
        res = await this.fetchFn(path, init);
      } catch (err) {
        if (attempt >= this.retries) {
          throw err;
        }
        await this.sleep(delay);
        delay *= 2;
        continue;
      }
      const body: unknown = await res.json().catch(() => ({}));
      if (res.status === 409) {
        throw new ConflictError(errorText(body, res.status));
      }
      if (!res.ok) {
        throw new ApiError(res.status, errorText(body, res.status));
      }
      return body;
    }
  }

  async openSession(): Promise<SessionInfo> {
    const doc = (await this.request("/api/session")) as {
      session_id: string;
      judged: number;
      total: number;
    };
    return { sessionId: doc.session_id, judged: doc.judged, total: doc.total };
  }

  /** The session's next unjudged pair, or null when it has finished. */
  async nextPair(sessionId: string): Promise<PairView | null> {
    const doc = (await this.request(
      `/api/pairs/next?session=${encodeURIComponent(sessionId)}`,
    )) as {
      done: boolean;
      pair_id?: string;
      a?: { title: string; image_url: string };
      b?: { title: string; image_url: string };
      judged: number;
      total: number;
    };
    if (doc.done || !doc.pair_id || !doc.a || !doc.b) {
      return null;
    }
    return {
      pairId: doc.pair_id,
      left: { title: doc.a.title, imageUrl: doc.a.image_url },
      right: { title: doc.b.title, imageUrl: doc.b.image_url },
      judged: doc.judged,
      total: doc.total,
    };
  }

  async submitJudgment(
    sessionId: string,
    pairId: string,
    choice: Choice,
    rationale: string,
  ): Promise<Progress> {
    const doc = (await this.request("/api/judgments", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        session_id: sessionId,
        pair_id: pairId,
        choice,
        rationale,
      }),
    })) as { judged: number; total: number };
    return { judged: doc.judged, total: doc.total };
  }

  async stats(): Promise<Stats> {
    const doc = (await this.request("/api/stats")) as {
      n_judgments: number;
      accuracy: number | null;
      per_annotator: { session_id: string; n: number; accuracy: number | null }[];
    };
    return {
      nJudgments: doc.n_judgments,
      accuracy: doc.accuracy,
      perAnnotator: doc.per_annotator.map((a) => ({
        sessionId: a.session_id,
        n: a.n,
        accuracy: a.accuracy,
      })),
    };
  }
}
