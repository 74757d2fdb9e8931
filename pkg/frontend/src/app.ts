/**
 * Single-page annotator for the verification queue.
 *
 * The page holds one task at a time: fetch, show the region with the pseudo
 * box outlined, collect one decision, post it, advance. Every acceptance
 * rule lives on the server; the client never measures anything.
 */

import {
  ApiError,
  fetchNextTask,
  fetchStatus,
  makeClient,
  postVerdict,
  type ApiClient,
} from "./api.js";
import {
  boxFromTuple,
  clampToRegion,
  fitRegion,
  normalizeDrag,
  toCanvas,
  toImage,
  type Box,
  type ViewTransform,
} from "./transform.js";
import {
  correctBox,
  correctClass,
  dropBox,
  keepBox,
  keepClass,
} from "./verdicts.js";
import type { Category, TaskPayload, VerdictBody } from "./types.js";

const BASE_URL_KEY = "delr-base-url";
const SESSION_KEY = "delr-session";
const WAIT_RETRY_MS = 2000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function sessionId(): string {
  // per tab on purpose: the server leases one task per session id
  let sid = sessionStorage.getItem(SESSION_KEY);
  if (!sid) {
    sid = crypto.randomUUID();
    sessionStorage.setItem(SESSION_KEY, sid);
  }
  return sid;
}

function hours(ms: number): string {
  return (ms / 3_600_000).toFixed(2);
}

interface DragState {
  startX: number;
  startY: number;
  lastX: number;
  lastY: number;
}

class AnnotatorApp {
  private client: ApiClient | null = null;
  private categories: Category[] = [];
  private task: TaskPayload | null = null;
  private view: ViewTransform | null = null;
  private regionBox: Box | null = null;
  private cropImage: HTMLImageElement | null = null;
  private drawing = false;
  private drag: DragState | null = null;
  private pendingBox: Box | null = null;
  private postedTaskId: string | null = null;
  private leaseTimer: number | null = null;
  private retryTimer: number | null = null;

  private readonly canvas = el<HTMLCanvasElement>("scene");
  private readonly ctx = this.canvas.getContext("2d")!;

  constructor() {
    const baseInput = el<HTMLInputElement>("base-url");
    baseInput.value =
      localStorage.getItem(BASE_URL_KEY) ?? window.location.origin;
    el<HTMLButtonElement>("connect").addEventListener("click", () => {
      void this.connect(baseInput.value.trim());
    });

    el<HTMLButtonElement>("keep-box").addEventListener("click", () => {
      void this.submit(keepBox());
    });
    el<HTMLButtonElement>("drop-box").addEventListener("click", () => {
      void this.submit(dropBox());
    });
    el<HTMLButtonElement>("start-draw").addEventListener("click", () => {
      this.enterDrawMode();
    });
    el<HTMLButtonElement>("confirm-draw").addEventListener("click", () => {
      if (this.pendingBox) {
        void this.submit(correctBox(this.pendingBox));
      }
    });
    el<HTMLButtonElement>("cancel-draw").addEventListener("click", () => {
      this.leaveDrawMode();
    });
    el<HTMLButtonElement>("keep-class").addEventListener("click", () => {
      void this.submit(keepClass());
    });
    el<HTMLButtonElement>("confirm-class").addEventListener("click", () => {
      const pick = el<HTMLSelectElement>("class-pick");
      void this.submit(correctClass(Number(pick.value)));
    });

    this.canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    this.canvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    this.canvas.addEventListener("pointerup", (e) => this.onPointerUp(e));
  }

  private async connect(baseUrl: string): Promise<void> {
    if (!baseUrl) {
      this.showError("enter the service URL first");
      return;
    }
    localStorage.setItem(BASE_URL_KEY, baseUrl);
    this.client = makeClient(baseUrl, sessionId());
    this.clearError();
    try {
      await this.refreshStatus();
    } catch (err) {
      this.client = null;
      this.showError(err instanceof Error ? err.message : String(err));
      return;
    }
    await this.nextTask();
  }

  private async refreshStatus(): Promise<void> {
    if (!this.client) {
      return;
    }
    const status = await fetchStatus(this.client);
    this.categories = status.categories;
    const spent =
      status.ledger.spent_loc_ms + status.ledger.spent_cls_ms;
    el("stat-phase").textContent = status.phase;
    el("stat-spent").textContent = `${hours(spent)} h`;
    el("stat-left").textContent = `${hours(status.budget_remaining_ms)} h`;
    el("stat-outstanding").textContent = String(status.outstanding);

    const pick = el<HTMLSelectElement>("class-pick");
    pick.replaceChildren(
      ...this.categories.map((c) => {
        const opt = document.createElement("option");
        opt.value = String(c.index);
        opt.textContent = c.name;
        return opt;
      }),
    );
  }

  private async nextTask(): Promise<void> {
    if (!this.client) {
      return;
    }
    this.dropTaskState();
    this.setNote("fetching task...");
    let result;
    try {
      result = await fetchNextTask(this.client);
    } catch (err) {
      this.showError(err instanceof Error ? err.message : String(err));
      return;
    }
    switch (result.kind) {
      case "task":
        this.showTask(result.task);
        break;
      case "waiting":
        this.setNote(result.detail);
        this.retryTimer = window.setTimeout(() => {
          void this.nextTask();
        }, WAIT_RETRY_MS);
        break;
      case "drained":
        this.setNote(`${result.detail} - nothing left to review`);
        break;
      case "budget":
        this.setNote(`${result.detail} - the session is over`);
        break;
    }
  }

  private showTask(task: TaskPayload): void {
    this.task = task;
    this.regionBox = boxFromTuple(task.region);
    this.view = fitRegion(this.regionBox, this.canvas.width, this.canvas.height);
    this.setNote("");
    el("task-id").textContent = task.task_id;
    el("task-kind").textContent = task.kind;
    el("task-class").textContent =
      this.categories[task.pseudo_class]?.name ?? `class ${task.pseudo_class}`;

    el("box-actions").hidden = task.kind !== "Box";
    el("class-actions").hidden = task.kind !== "Class";
    el("draw-actions").hidden = true;
    this.setActionsEnabled(true);

    // the lease is the server's, not ours; when it runs out the task goes
    // back to the queue and we simply ask again
    this.leaseTimer = window.setTimeout(() => {
      if (this.task?.task_id === task.task_id && this.postedTaskId === null) {
        this.setNote("lease expired; the task went back to the queue");
        void this.nextTask();
      }
    }, Math.max(0, task.lease_expires_in_s * 1000));

    this.cropImage = null;
    if (task.crop_url && this.client) {
      const img = new Image();
      img.onload = () => {
        if (this.task?.task_id === task.task_id) {
          this.cropImage = img;
          this.render();
        }
      };
      img.onerror = () => this.render();
      img.src = this.client.baseUrl + task.crop_url;
    }
    this.render();
  }

  private render(): void {
    const ctx = this.ctx;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (!this.task || !this.regionBox || !this.view) {
      return;
    }
    const region = toCanvas(this.regionBox, this.regionBox, this.view);

    if (this.cropImage) {
      ctx.drawImage(this.cropImage, region.x, region.y, region.w, region.h);
    } else {
      // synthetic scene: a plain backdrop, no objects to show
      ctx.fillStyle = "#202830";
      ctx.fillRect(region.x, region.y, region.w, region.h);
      ctx.fillStyle = "#5a6672";
      ctx.font = "12px sans-serif";
      ctx.fillText("synthetic scene (no raster)", region.x + 8, region.y + 18);
    }
    ctx.strokeStyle = "#8899aa";
    ctx.lineWidth = 1;
    ctx.strokeRect(region.x, region.y, region.w, region.h);

    const pseudo = toCanvas(
      boxFromTuple(this.task.pseudo_box),
      this.regionBox,
      this.view,
    );
    ctx.strokeStyle = "#ffcc3e";
    ctx.lineWidth = 2;
    ctx.strokeRect(pseudo.x, pseudo.y, pseudo.w, pseudo.h);

    const live = this.liveDragBox();
    if (live) {
      ctx.strokeStyle = "#46d19a";
      ctx.lineWidth = 2;
      ctx.setLineDash([6, 4]);
      ctx.strokeRect(live.x, live.y, live.w, live.h);
      ctx.setLineDash([]);
    } else if (this.pendingBox && this.view && this.regionBox) {
      const p = toCanvas(this.pendingBox, this.regionBox, this.view);
      ctx.strokeStyle = "#46d19a";
      ctx.lineWidth = 2;
      ctx.strokeRect(p.x, p.y, p.w, p.h);
    }
  }

  private liveDragBox(): Box | null {
    if (!this.drag) {
      return null;
    }
    return normalizeDrag(
      this.drag.startX,
      this.drag.startY,
      this.drag.lastX,
      this.drag.lastY,
    );
  }

  private enterDrawMode(): void {
    this.drawing = true;
    this.pendingBox = null;
    el("box-actions").hidden = true;
    el("draw-actions").hidden = false;
    el<HTMLButtonElement>("confirm-draw").disabled = true;
    this.setNote("drag a box over the object");
    this.render();
  }

  private leaveDrawMode(): void {
    this.drawing = false;
    this.drag = null;
    this.pendingBox = null;
    if (this.task) {
      el("box-actions").hidden = this.task.kind !== "Box";
    }
    el("draw-actions").hidden = true;
    this.setNote("");
    this.render();
  }

  private canvasPoint(e: PointerEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return {
      x: ((e.clientX - rect.left) / rect.width) * this.canvas.width,
      y: ((e.clientY - rect.top) / rect.height) * this.canvas.height,
    };
  }

  private onPointerDown(e: PointerEvent): void {
    if (!this.drawing) {
      return;
    }
    const p = this.canvasPoint(e);
    this.drag = { startX: p.x, startY: p.y, lastX: p.x, lastY: p.y };
    this.canvas.setPointerCapture(e.pointerId);
  }

  private onPointerMove(e: PointerEvent): void {
    if (!this.drag) {
      return;
    }
    const p = this.canvasPoint(e);
    this.drag.lastX = p.x;
    this.drag.lastY = p.y;
    this.render();
  }

  private onPointerUp(e: PointerEvent): void {
    if (!this.drag || !this.regionBox || !this.view) {
      return;
    }
    const p = this.canvasPoint(e);
    const canvasBox = normalizeDrag(
      this.drag.startX,
      this.drag.startY,
      p.x,
      p.y,
    );
    this.drag = null;
    const imageBox = toImage(canvasBox, this.regionBox, this.view);
    const clamped = clampToRegion(imageBox, this.regionBox);
    if (!clamped) {
      this.setNote("that box has no area inside the region; try again");
      this.render();
      return;
    }
    this.pendingBox = clamped;
    el<HTMLButtonElement>("confirm-draw").disabled = false;
    this.setNote("confirm the drawn box or cancel");
    this.render();
  }

  private async submit(body: VerdictBody): Promise<void> {
    if (!this.client || !this.task) {
      return;
    }
    if (this.postedTaskId === this.task.task_id) {
      return; // one verdict per task, no doubles on impatient clicks
    }
    this.postedTaskId = this.task.task_id;
    this.setActionsEnabled(false);
    this.clearError();
    try {
      await postVerdict(this.client, this.task.task_id, body);
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        // rejected before any charge; let the annotator fix the input
        this.postedTaskId = null;
        this.setActionsEnabled(true);
        this.showError(`rejected: ${err.detail}`);
        return;
      }
      if (err instanceof ApiError && err.status === 409) {
        this.showError(`lost the task (${err.detail}); fetching a fresh one`);
        await this.nextTask();
        return;
      }
      if (err instanceof ApiError && err.status === 410) {
        this.showError(err.detail);
        this.dropTaskState();
        this.setNote("annotation budget exhausted - the session is over");
        return;
      }
      this.showError(err instanceof Error ? err.message : String(err));
      return;
    }
    try {
      await this.refreshStatus();
    } catch {
      // status is cosmetic here; never block the next task on it
    }
    await this.nextTask();
  }

  private dropTaskState(): void {
    if (this.leaseTimer !== null) {
      clearTimeout(this.leaseTimer);
      this.leaseTimer = null;
    }
    if (this.retryTimer !== null) {
      clearTimeout(this.retryTimer);
      this.retryTimer = null;
    }
    this.task = null;
    this.regionBox = null;
    this.view = null;
    this.cropImage = null;
    this.drawing = false;
    this.drag = null;
    this.pendingBox = null;
    this.postedTaskId = null;
    el("box-actions").hidden = true;
    el("class-actions").hidden = true;
    el("draw-actions").hidden = true;
    el("task-id").textContent = "-";
    el("task-kind").textContent = "-";
    el("task-class").textContent = "-";
    this.ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
  }

  private setActionsEnabled(enabled: boolean): void {
    for (const id of [
      "keep-box",
      "drop-box",
      "start-draw",
      "confirm-draw",
      "cancel-draw",
      "keep-class",
      "confirm-class",
    ]) {
      el<HTMLButtonElement>(id).disabled = !enabled;
    }
  }

  private setNote(text: string): void {
    el("note").textContent = text;
  }

  private showError(text: string): void {
    el("error").textContent = text;
  }

  private clearError(): void {
    el("error").textContent = "";
  }
}

new AnnotatorApp();
