/** Plain-DOM view over the session machine.
 *
 * Two captioned panels side by side; pick one by clicking it or with the
 * left/right arrow keys, optionally say why, submit. A panel whose image
 * fails to load keeps its caption and stays choosable behind a placeholder
 * tile. The submit button is disabled until a side is chosen.
 */

import { Choice, PairView, SideView } from "./api.js";
import { SessionMachine, State } from "./state.js";

export class AnnotateView {
  private root: HTMLElement;
  private machine: SessionMachine;
  private renderedPairId: string | null = null;

  constructor(root: HTMLElement, machine: SessionMachine) {
    this.root = root;
    this.machine = machine;
    machine.subscribe((state) => this.render(state));
    document.addEventListener("keydown", (ev) => this.onKey(ev));
  }

  private onKey(ev: KeyboardEvent): void {
    if (ev.target instanceof HTMLTextAreaElement) {
      return; // typing a rationale
    }
    if (ev.key === "ArrowLeft") {
      this.machine.select("a");
    } else if (ev.key === "ArrowRight") {
      this.machine.select("b");
    } else if (ev.key === "Enter") {
      void this.machine.submit();
    }
  }

  private render(state: State): void {
    switch (state.phase) {
      case "loading":
        this.root.replaceChildren(el("p", "status", "loading…"));
        this.renderedPairId = null;
        return;
      case "failed":
        this.root.replaceChildren(el("p", "status error", state.notice));
        this.renderedPairId = null;
        return;
      case "done":
        this.renderDone(state);
        this.renderedPairId = null;
        return;
      default:
        this.renderPair(state);
    }
  }

  private renderDone(state: State): void {
    const box = el("div", "done");
    box.appendChild(el("h1", "", "all pairs judged"));
    box.appendChild(el("p", "", `you judged ${state.judged} pairs`));
    const accuracy =
      state.accuracy === null
        ? "accuracy not available"
        : `your accuracy: ${(state.accuracy * 100).toFixed(1)}%`;
    box.appendChild(el("p", "accuracy", accuracy));
    this.root.replaceChildren(box);
  }

  private renderPair(state: State): void {
    const pair = state.pair;
    if (pair === null) {
      return;
    }
    if (pair.pairId !== this.renderedPairId) {
      this.buildPair(pair);
      this.renderedPairId = pair.pairId;
    }
    this.updateControls(state);
  }

  /** Build the DOM for a fresh pair; selection state is patched in
   * updateControls so images are not reloaded on every state change. */
  private buildPair(pair: PairView): void {
    const progress = el(
      "p",
      "progress",
      `${pair.judged} / ${pair.total} judged`,
    );
    const panels = el("div", "panels");
    panels.appendChild(this.buildPanel(pair.left, "a"));
    panels.appendChild(this.buildPanel(pair.right, "b"));

    const rationale = document.createElement("textarea");
    rationale.className = "rationale";
    rationale.placeholder = "why? (optional)";
    rationale.addEventListener("input", () => {
      this.machine.setRationale(rationale.value);
    });

    const submit = document.createElement("button");
    submit.className = "submit";
    submit.textContent = "submit";
    submit.disabled = true;
    submit.addEventListener("click", () => void this.machine.submit());

    const notice = el("p", "notice", "");
    this.root.replaceChildren(progress, panels, rationale, submit, notice);
  }

  private buildPanel(side: SideView, slot: Choice): HTMLElement {
    const panel = el("figure", "panel");
    panel.dataset.slot = slot;
    const img = document.createElement("img");
    img.src = side.imageUrl;
    img.alt = "";
    img.addEventListener("error", () => {
      // keep the caption and the choice; only the picture is gone
      img.replaceWith(el("div", "placeholder", "image unavailable"));
    });
    panel.appendChild(img);
    panel.appendChild(el("figcaption", "", side.title));
    panel.addEventListener("click", () => this.machine.select(slot));
    return panel;
  }

  private updateControls(state: State): void {
    for (const panel of this.root.querySelectorAll<HTMLElement>(".panel")) {
      panel.classList.toggle("selected", panel.dataset.slot === state.selected);
    }
    const submit = this.root.querySelector<HTMLButtonElement>(".submit");
    if (submit !== null) {
      submit.disabled = state.selected === null || state.phase !== "judging";
      submit.textContent = state.phase === "submitting" ? "saving…" : "submit";
    }
    const notice = this.root.querySelector<HTMLElement>(".notice");
    if (notice !== null) {
      notice.textContent = state.notice;
    }
  }
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}
