/** Browser entry point: wire the API client, session machine, and view
 * together. The session id lives in sessionStorage so a refresh resumes the
 * same annotator; nothing else is persisted client side.
 */

import { ApiClient } from "./api.js";
import { IdStore, SessionMachine } from "./state.js";
import { AnnotateView } from "./view.js";

const SESSION_KEY = "annotate-session-id";

class SessionStorageIdStore implements IdStore {
  get(): string | null {
    return window.sessionStorage.getItem(SESSION_KEY);
  }

  set(id: string): void {
    window.sessionStorage.setItem(SESSION_KEY, id);
  }
}

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app element");
}
const api = new ApiClient({});
const machine = new SessionMachine(api, new SessionStorageIdStore());
new AnnotateView(root, machine);
void machine.start();
