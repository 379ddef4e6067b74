/** Control panel DOM: offset sliders, IK budget, scrubber, residuals, save. */

import type { PanelStore, ViewState } from "./store.js";

interface SliderDef {
  label: string;
  min: number;
  max: number;
  step: number;
}

const SLIDERS: SliderDef[] = [
  { label: "x (m)", min: -0.2, max: 0.2, step: 0.001 },
  { label: "y (m)", min: -0.2, max: 0.2, step: 0.001 },
  { label: "z (m)", min: -0.2, max: 0.2, step: 0.001 },
  { label: "roll (rad)", min: -Math.PI, max: Math.PI, step: 0.01 },
  { label: "pitch (rad)", min: -Math.PI, max: Math.PI, step: 0.01 },
  { label: "yaw (rad)", min: -Math.PI, max: Math.PI, step: 0.01 },
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export class Panel {
  private readonly banner = el("div", "banner");
  private readonly badge = el("span", "badge");
  private readonly title = el("h3", undefined, "offset calibration");
  private readonly sliderInputs: HTMLInputElement[] = [];
  private readonly sliderValues: HTMLSpanElement[] = [];
  private readonly scrubber = el("input") as HTMLInputElement;
  private readonly frameLabel = el("span", "frame-label");
  private readonly residualBody = el("tbody");
  private readonly rmsLine = el("p", "rms-line");
  private readonly clampedLine = el("p", "clamped-line");
  private readonly solveLine = el("p", "solve-line");
  private readonly savedLine = el("p", "saved-line");
  private readonly storeInput = el("input") as HTMLInputElement;
  private readonly itersInput = el("input") as HTMLInputElement;

  constructor(
    private readonly store: PanelStore,
    root: HTMLElement,
  ) {
    root.append(this.banner, this.title, this.badge);
    this.buildSliders(root);
    this.buildScrubber(root);
    this.buildResiduals(root);
    this.buildActions(root);
    store.subscribe((view) => this.render(view));
  }

  private buildSliders(root: HTMLElement): void {
    const box = el("div", "sliders");
    SLIDERS.forEach((def, i) => {
      const row = el("label", "slider-row");
      row.append(el("span", "slider-label", def.label));
      const input = el("input") as HTMLInputElement;
      input.type = "range";
      input.min = String(def.min);
      input.max = String(def.max);
      input.step = String(def.step);
      input.value = "0";
      input.addEventListener("input", () => {
        this.store.moveSlider(i, Number(input.value));
      });
      // release sends the final value without waiting out the debounce
      input.addEventListener("change", () => {
        this.store.moveSlider(i, Number(input.value));
        this.store.flushOffset();
      });
      const value = el("span", "slider-value", "0.000");
      row.append(input, value);
      box.append(row);
      this.sliderInputs.push(input);
      this.sliderValues.push(value);
    });
    root.append(box);
  }

  private buildScrubber(root: HTMLElement): void {
    const row = el("div", "scrub-row");
    const prev = el("button", undefined, "<");
    const next = el("button", undefined, ">");
    prev.addEventListener("click", () => void this.store.stepFrame(-1));
    next.addEventListener("click", () => void this.store.stepFrame(1));
    this.scrubber.type = "range";
    this.scrubber.min = "0";
    this.scrubber.step = "1";
    this.scrubber.addEventListener("change", () => {
      void this.store.goToFrame(Number(this.scrubber.value));
    });
    row.append(prev, this.scrubber, next, this.frameLabel);
    root.append(row);
  }

  private buildResiduals(root: HTMLElement): void {
    const table = el("table", "residuals");
    const head = el("thead");
    const headRow = el("tr");
    headRow.append(el("th", undefined, "fingertip"), el("th", undefined, "residual (m)"));
    head.append(headRow);
    table.append(head, this.residualBody);
    root.append(table, this.rmsLine, this.clampedLine);
  }

  private buildActions(root: HTMLElement): void {
    const solve = el("button", undefined, "solve all frames");
    solve.addEventListener("click", () => void this.store.solveAll());

    this.storeInput.type = "text";
    this.storeInput.placeholder = "profile directory";
    this.storeInput.value = "profiles";
    const save = el("button", undefined, "save profile");
    save.addEventListener("click", () => {
      void this.store.saveProfile(this.storeInput.value);
    });

    this.itersInput.type = "number";
    this.itersInput.min = "1";
    this.itersInput.value = "30";
    const apply = el("button", undefined, "apply IK budget");
    apply.addEventListener("click", () => {
      void this.store.setMaxIters(Number(this.itersInput.value));
    });

    const actions = el("div", "actions");
    const itersRow = el("label", "iters-row");
    itersRow.append(el("span", undefined, "max iters"), this.itersInput, apply);
    actions.append(solve, itersRow, this.storeInput, save, this.solveLine, this.savedLine);
    root.append(actions);
  }

  private render(view: ViewState): void {
    this.banner.textContent = view.banner ?? "";
    this.banner.style.display = view.banner === null ? "none" : "block";

    const badge = view.dirty
      ? ["stale", "badge stale"]
      : view.converged
        ? ["converged", "badge ok"]
        : ["not converged", "badge bad"];
    this.badge.textContent = `${badge[0]}${view.busy ? "…" : ""}`;
    this.badge.className = badge[1]!;

    view.sliders.forEach((value, i) => {
      const input = this.sliderInputs[i]!;
      if (document.activeElement !== input) {
        input.value = String(value);
      }
      input.disabled = !view.connected || view.sessionId === null;
      this.sliderValues[i]!.textContent = value.toFixed(3);
    });

    this.scrubber.max = String(Math.max(0, view.nFrames - 1));
    if (document.activeElement !== this.scrubber) {
      this.scrubber.value = String(view.frame);
    }
    this.scrubber.disabled = !view.connected || view.sessionId === null;
    this.frameLabel.textContent = `${view.frame + 1}/${view.nFrames}`;

    this.residualBody.replaceChildren(
      ...view.residuals.map((row) => {
        const tr = el("tr");
        tr.append(
          el("td", undefined, row.tip),
          el("td", undefined, row.value.toExponential(3)),
        );
        return tr;
      }),
    );
    this.rmsLine.textContent = Number.isFinite(view.rms)
      ? `rms ${view.rms.toExponential(3)} m in ${view.itersUsed} iters`
      : "";
    this.clampedLine.textContent =
      view.clampedJoints.length > 0 ? `clamped: ${view.clampedJoints.join(", ")}` : "";
    this.solveLine.textContent =
      view.solveRate === null ? "" : `solve-all convergence ${(view.solveRate * 100).toFixed(1)}%`;
    this.savedLine.textContent = view.savedPath === null ? "" : `saved ${view.savedPath}`;
  }
}
