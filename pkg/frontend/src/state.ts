// Editor document and history. The undoable document is (loop, layers);
// generation settings and job status sit outside history so undo never
// yanks the seed or preset out from under the user.

import type { GridBox } from "./grid.js";
import { BEATS_PER_LOOP, PITCH_MAX, PITCH_MIN } from "./grid.js";
import type { JobState, Loop, TaskKind } from "./types.js";

export type PaintMode = "infill" | "erase" | "pin";

export interface ConstraintLayer {
  id: number;
  mode: PaintMode;
  box: GridBox;
  // per-layer task parameters; only infill layers read them
  minNotes: number;
  maxNotes: number;
}

export interface EditorDoc {
  loop: Loop | null;
  layers: ConstraintLayer[];
}

export interface GenerationSettings {
  kind: TaskKind;
  T: number | null; // null defers to the preset suggestion
  topP: number | null;
  seed: number;
  tReveal: number;
  instruments: string[];
  pitchClasses: number[];
  onsetBeats: number[];
  attributes: string[];
  regenInstruments: string[];
}

export interface JobView {
  jobId: string | null;
  state: JobState | "idle";
  error: string | null;
}

export function defaultSettings(): GenerationSettings {
  return {
    kind: "unconditional",
    T: null,
    topP: null,
    seed: 0,
    tReveal: 0.5,
    instruments: ["Drums", "Bass"],
    pitchClasses: [0, 2, 4, 5, 7, 9, 11],
    onsetBeats: Array.from({ length: BEATS_PER_LOOP }, (_, b) => b),
    attributes: ["pitch"],
    regenInstruments: ["Bass"],
  };
}

function clone<T>(value: T): T {
  return structuredClone(value);
}

export function coversFullGrid(box: GridBox): boolean {
  return (
    box.beatLo <= 0 && box.beatHi >= BEATS_PER_LOOP &&
    box.pitchLo <= PITCH_MIN && box.pitchHi >= PITCH_MAX
  );
}

export class EditorState {
  settings: GenerationSettings;
  job: JobView;
  private history: EditorDoc[];
  private cursor: number;
  private nextLayerId: number;

  constructor(initial?: EditorDoc) {
    this.history = [clone(initial ?? { loop: null, layers: [] })];
    this.cursor = 0;
    this.nextLayerId = 1;
    this.settings = defaultSettings();
    this.job = { jobId: null, state: "idle", error: null };
  }

  /** Current snapshot. Treat as immutable; edits go through methods. */
  get doc(): EditorDoc {
    return this.history[this.cursor];
  }

  get snapshotCount(): number {
    return this.history.length;
  }

  get position(): number {
    return this.cursor;
  }

  private push(next: EditorDoc): void {
    // an edit after undo abandons the redo tail
    this.history = this.history.slice(0, this.cursor + 1);
    this.history.push(next);
    this.cursor = this.history.length - 1;
  }

  setLoop(loop: Loop | null): void {
    this.push({ loop: clone(loop), layers: clone(this.doc.layers) });
  }

  /** Swap in a generation result, keeping painted layers for iteration. */
  acceptResult(loop: Loop): void {
    this.setLoop(loop);
  }

  paintConstraint(
    mode: PaintMode, box: GridBox,
    params?: { minNotes?: number; maxNotes?: number },
  ): ConstraintLayer {
    const layer: ConstraintLayer = {
      id: this.nextLayerId++,
      mode,
      box: clone(box),
      minNotes: params?.minNotes ?? 1,
      maxNotes: params?.maxNotes ?? 8,
    };
    this.push({
      loop: clone(this.doc.loop),
      layers: [...clone(this.doc.layers), layer],
    });
    // painting gestures steer the preset: an infill box means infill,
    // erasing everything means start over, pinning everything means replay
    if (mode === "infill") {
      this.settings.kind = "infillBox";
    } else if (mode === "erase" && coversFullGrid(box)) {
      this.settings.kind = "unconditional";
    } else if (mode === "pin" && coversFullGrid(box)) {
      this.settings.kind = "fullyDetermined";
    }
    return layer;
  }

  removeLayer(id: number): boolean {
    const layers = this.doc.layers.filter((l) => l.id !== id);
    if (layers.length === this.doc.layers.length) return false;
    this.push({ loop: clone(this.doc.loop), layers: clone(layers) });
    return true;
  }

  clearLayers(): void {
    this.push({ loop: clone(this.doc.loop), layers: [] });
  }

  updateLayer(
    id: number, patch: Partial<Pick<ConstraintLayer, "box" | "minNotes" | "maxNotes">>,
  ): boolean {
    const layers = clone(this.doc.layers);
    const target = layers.find((l) => l.id === id);
    if (!target) return false;
    if (patch.box) target.box = clone(patch.box);
    if (patch.minNotes !== undefined) target.minNotes = patch.minNotes;
    if (patch.maxNotes !== undefined) target.maxNotes = patch.maxNotes;
    this.push({ loop: clone(this.doc.loop), layers });
    return true;
  }

  get canUndo(): boolean {
    return this.cursor > 0;
  }

  get canRedo(): boolean {
    return this.cursor < this.history.length - 1;
  }

  undo(): boolean {
    if (!this.canUndo) return false;
    this.cursor -= 1;
    return true;
  }

  redo(): boolean {
    if (!this.canRedo) return false;
    this.cursor += 1;
    return true;
  }

  /** Jump straight to any snapshot index in [0, snapshotCount). */
  undoTo(index: number): boolean {
    if (index < 0 || index >= this.history.length) return false;
    this.cursor = index;
    return true;
  }
}
