/** Payload shapes of the verification service, mirrored field for field. */

/** Axis-aligned box as the service serializes it: [x, y, w, h]. */
export type BoxTuple = [number, number, number, number];

export type TaskKind = "Box" | "Class";

export interface TaskPayload {
  task_id: string;
  kind: TaskKind;
  image_id: string;
  annotation_id: string;
  region: BoxTuple;
  pseudo_box: BoxTuple;
  pseudo_class: number;
  issued_cycle: number;
  lease_expires_in_s: number;
  /** Present when the server has a raster to crop from; null for synthetic scenes. */
  crop_url: string | null;
}

export interface Category {
  index: number;
  id: number;
  name: string;
}

export interface LedgerSnapshot {
  budget_total_ms: number;
  budget_loc_ms: number;
  budget_cls_ms: number;
  spent_loc_ms: number;
  spent_cls_ms: number;
  entries: [string, string, number][];
}

export interface StatusPayload {
  phase: "Box" | "Class" | "done";
  ledger: LedgerSnapshot;
  counts: Record<string, number>;
  box_pass: Record<string, unknown>;
  class_pass: Record<string, unknown>;
  outstanding: number;
  categories: Category[];
  budget_remaining_ms: number;
}

export type VerdictAnswer =
  | "BoxKeep"
  | "BoxDrop"
  | "BoxCorrect"
  | "ClassKeep"
  | "ClassCorrect";

/**
 * Body of POST /api/v1/tasks/{id}/verdict. Optional fields are written only
 * when the answer carries them, so the serialized form stays minimal.
 */
export interface VerdictBody {
  answer: VerdictAnswer;
  new_box?: BoxTuple;
  new_class?: number;
}

export interface AppliedVerdict {
  applied: boolean;
  seq: number;
  task_id: string;
  kind: TaskKind;
  annotation_id: string;
  answer: VerdictAnswer;
  new_box: BoxTuple | null;
  new_class: number | null;
}
