// Session UI: one chart, two blinded summaries, a pick control, progress.
// All state is server-authoritative; the page only mirrors it.

import { BackendError, EvalApi, PairView, Side } from "./api";

export interface AppElements {
  chartImage: HTMLImageElement;
  leftText: HTMLElement;
  rightText: HTMLElement;
  leftButton: HTMLButtonElement;
  rightButton: HTMLButtonElement;
  progress: HTMLElement;
  status: HTMLElement;
  pairPanel: HTMLElement;
  completePanel: HTMLElement;
}

export function findElements(root: Document): AppElements {
  const get = <T extends HTMLElement>(id: string): T => {
    const el = root.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el as T;
  };
  return {
    chartImage: get<HTMLImageElement>("chart-image"),
    leftText: get("left-text"),
    rightText: get("right-text"),
    leftButton: get<HTMLButtonElement>("pick-left"),
    rightButton: get<HTMLButtonElement>("pick-right"),
    progress: get("progress"),
    status: get("status"),
    pairPanel: get("pair-panel"),
    completePanel: get("complete-panel"),
  };
}

export class SessionApp {
  private sessionId: string | null = null;
  private currentPairId: string | null = null;
  private submitting = false;

  constructor(
    private api: EvalApi,
    private el: AppElements,
  ) {}

  async start(): Promise<void> {
    this.setButtonsEnabled(false);
    this.el.status.textContent = "Starting session…";
    try {
      this.sessionId = await this.api.openSession();
    } catch (err) {
      this.el.status.textContent = "Could not reach the evaluation server. Reload to retry.";
      throw err;
    }
    this.el.leftButton.addEventListener("click", () => void this.pick("left"));
    this.el.rightButton.addEventListener("click", () => void this.pick("right"));
    this.el.leftButton.ownerDocument.addEventListener("keydown", (event) => {
      if (event.key === "ArrowLeft") void this.pick("left");
      if (event.key === "ArrowRight") void this.pick("right");
    });
    await this.loadNext();
  }

  private setButtonsEnabled(enabled: boolean): void {
    this.el.leftButton.disabled = !enabled;
    this.el.rightButton.disabled = !enabled;
  }

  private renderProgress(done: number, total: number): void {
    this.el.progress.textContent = `${done} / ${total}`;
  }

  async loadNext(): Promise<void> {
    if (!this.sessionId) return;
    this.setButtonsEnabled(false);
    const view = await this.api.next(this.sessionId);
    this.renderProgress(view.progress.done, view.progress.total);
    if (view.done) {
      this.currentPairId = null;
      this.el.pairPanel.hidden = true;
      this.el.completePanel.hidden = false;
      this.el.status.textContent = "All pairs answered. Thank you!";
      return;
    }
    this.renderPair(view);
  }

  private renderPair(view: PairView): void {
    this.currentPairId = view.pair_id;
    this.el.pairPanel.hidden = false;
    this.el.completePanel.hidden = true;
    this.el.chartImage.src = this.api.resolve(view.chart_image_url);
    this.el.leftText.textContent = view.left;
    this.el.rightText.textContent = view.right;
    this.el.status.textContent = "Pick the summary you prefer.";
    // both texts are rendered; picking becomes possible
    this.setButtonsEnabled(true);
  }

  async pick(side: Side): Promise<void> {
    if (!this.sessionId || !this.currentPairId || this.submitting) return;
    if (this.el.leftButton.disabled) return;
    this.submitting = true;
    this.setButtonsEnabled(false);
    const pairId = this.currentPairId;
    try {
      try {
        await this.api.choose(this.sessionId, pairId, side);
      } catch (err) {
        if (err instanceof BackendError) {
          // server rejected outright (e.g. conflicting duplicate): surface it
          this.el.status.textContent = `Not recorded: ${err.message}`;
          return;
        }
        // transport fault: retry once; the backend dedupes by pair id
        await this.api.choose(this.sessionId, pairId, side);
      }
      await this.loadNext();
    } finally {
      this.submitting = false;
    }
  }
}

export async function boot(root: Document, baseUrl: string): Promise<SessionApp> {
  const app = new SessionApp(new EvalApi(baseUrl), findElements(root));
  await app.start();
  return app;
}
