/** In-memory stand-in for the judgment service, exposed as a FetchLike.
 *
 * Mirrors the wire contract the client depends on: session counter,
 * per-session next-unjudged-pair order, 201 on new judgments, 409 on
 * duplicates and unknown pairs, and stats with per-annotator accuracy.
 * Fault injection knobs let tests exercise the ugly paths.
 */

import { Choice, FetchLike } from "../src/api.js";

export interface FakePair {
  id: string;
  a: string; // title of slot a
  b: string;
  label: Choice;
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export class FakeService {
  sessionsOpened = 0;
  judgmentPosts = 0;
  lastJudgmentBody: Record<string, unknown> | null = null;
  /** when set, the next pairs/next response repeats the first pair */
  repeatNext = false;
  /** when set, the next POST waits on this before answering */
  postGate: Promise<void> | null = null;

  private bySession = new Map<string, Map<string, Choice>>();

  constructor(private pairs: FakePair[]) {}

  private judgedFor(sid: string): Map<string, Choice> {
    let m = this.bySession.get(sid);
    if (m === undefined) {
      m = new Map();
      this.bySession.set(sid, m);
    }
    return m;
  }

  fetchFn: FetchLike = async (rawPath, init) => {
    const url = new URL(rawPath, "http://fake.test");
    const method = init?.method ?? "GET";

    if (method === "GET" && url.pathname === "/api/session") {
      const sid = `an${String(this.sessionsOpened).padStart(4, "0")}`;
      this.sessionsOpened += 1;
      return jsonResponse(200, {
        session_id: sid,
        judged: 0,
        total: this.pairs.length,
      });
    }

    if (method === "GET" && url.pathname === "/api/pairs/next") {
      const sid = url.searchParams.get("session") ?? "";
      const judged = this.judgedFor(sid);
      let next = this.pairs.find((p) => !judged.has(p.id));
      if (this.repeatNext) {
        next = this.pairs[0];
        this.repeatNext = false;
      }
      if (next === undefined) {
        return jsonResponse(200, {
          done: true,
          judged: judged.size,
          total: this.pairs.length,
        });
      }
      return jsonResponse(200, {
        done: false,
        pair_id: next.id,
        a: { title: next.a, image_url: `/img/${next.id}-a` },
        b: { title: next.b, image_url: `/img/${next.id}-b` },
        judged: judged.size,
        total: this.pairs.length,
      });
    }

    if (method === "POST" && url.pathname === "/api/judgments") {
      this.judgmentPosts += 1;
      if (this.postGate !== null) {
        const gate = this.postGate;
        this.postGate = null;
        await gate;
      }
      const body = JSON.parse(String(init?.body)) as Record<string, unknown>;
      this.lastJudgmentBody = body;
      const sid = String(body.session_id);
      const pairId = String(body.pair_id);
      const judged = this.judgedFor(sid);
      if (!this.pairs.some((p) => p.id === pairId)) {
        return jsonResponse(409, { error: `unknown pair ${pairId}` });
      }
      if (judged.has(pairId)) {
        return jsonResponse(409, { error: "duplicate judgment" });
      }
      judged.set(pairId, body.choice as Choice);
      return jsonResponse(201, {
        ok: true,
        judged: judged.size,
        total: this.pairs.length,
      });
    }

    if (method === "GET" && url.pathname === "/api/stats") {
      const per = [...this.bySession.entries()]
        .filter(([, judged]) => judged.size > 0)
        .sort(([x], [y]) => (x < y ? -1 : 1))
        .map(([sid, judged]) => {
          let right = 0;
          for (const [pid, choice] of judged) {
            const pair = this.pairs.find((p) => p.id === pid);
            if (pair !== undefined && pair.label === choice) {
              right += 1;
            }
          }
          return { session_id: sid, n: judged.size, accuracy: right / judged.size };
        });
      const n = per.reduce((sum, a) => sum + a.n, 0);
      const right = per.reduce((sum, a) => sum + a.accuracy * a.n, 0);
      return jsonResponse(200, {
        n_judgments: n,
        accuracy: n > 0 ? right / n : null,
        per_annotator: per,
      });
    }

    return jsonResponse(404, { error: `no route for ${method} ${url.pathname}` });
  };
}
