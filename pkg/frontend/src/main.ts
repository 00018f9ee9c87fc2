// Page wiring: paint on the roll, compile server-side, generate, listen.
// One in-flight job at a time; results land as new history snapshots.

import { ApiClient, ServiceError } from "./api.js";
import { compileTask } from "./compile.js";
import {
  BEATS_PER_LOOP, PITCH_MAX, PITCH_MIN, snapBox, xToBeat, yToPitch,
} from "./grid.js";
import type { GridBox, Viewport } from "./grid.js";
import { Player } from "./playback.js";
import {
  drawGrid, drawLayers, drawNotes, drawPlayhead, drawRubberBand,
} from "./render.js";
import { EditorState } from "./state.js";
import type { PaintMode } from "./state.js";
import type {
  GenerateRequest, Loop, TaskKind, TaskPreset,
} from "./types.js";
import { INSTRUMENT_CLASSES } from "./types.js";

const ATTRIBUTES = [
  "instrument", "pitch", "onset_beat", "onset_tick",
  "offset_beat", "offset_tick", "velocity", "tempo", "tag",
];

const PITCH_CLASS_NAMES = [
  "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

const apiBase = new URLSearchParams(location.search).get("api") ?? "";
const client = new ApiClient({ baseUrl: apiBase });
const state = new EditorState();
const player = new Player(
  () => new AudioContext(),
  (msg) => setStatus(msg, "warn"),
);

const canvas = el<HTMLCanvasElement>("roll");
const ctx2d = canvas.getContext("2d")!;
const vp: Viewport = { width: 0, height: 0, pitchLo: 24, pitchHi: 102 };

let paintMode: PaintMode = "infill";
let dragAnchor: { beat: number; pitch: number } | null = null;
let rubber: GridBox | null = null;
let inFlight = false;
let lastRequest: GenerateRequest | null = null;
let presets: TaskPreset[] = [];
let playheadTimer: number | null = null;

function setStatus(text: string, tone: "ok" | "warn" | "err" = "ok"): void {
  const node = el<HTMLElement>("status");
  node.textContent = text;
  node.dataset.tone = tone;
  el<HTMLButtonElement>("retry").hidden = tone !== "err" || !lastRequest;
}

function resizeCanvas(): void {
  const rect = canvas.getBoundingClientRect();
  const scale = window.devicePixelRatio || 1;
  canvas.width = Math.floor(rect.width * scale);
  canvas.height = Math.floor(rect.height * scale);
  ctx2d.setTransform(scale, 0, 0, scale, 0, 0);
  vp.width = rect.width;
  vp.height = rect.height;
  draw();
}

function draw(): void {
  drawGrid(ctx2d, vp);
  drawLayers(ctx2d, state.doc.layers, vp);
  if (state.doc.loop) {
    drawNotes(ctx2d, state.doc.loop.notes, vp, player.muted);
  }
  if (rubber) drawRubberBand(ctx2d, rubber, vp);
  if (player.isPlaying) drawPlayhead(ctx2d, player.positionBeats(), vp);
}

function refreshIssues(): void {
  const { task, issues } = compileTask(state.doc, state.settings);
  const list = el<HTMLUListElement>("issues");
  list.replaceChildren(
    ...issues.map((text) => {
      const li = document.createElement("li");
      li.textContent = text;
      return li;
    }),
  );
  const blocked = task === null ||
    issues.some((i) => i.startsWith("conflict:"));
  el<HTMLButtonElement>("generate").disabled = inFlight || blocked;
}

function refreshHistoryButtons(): void {
  el<HTMLButtonElement>("undo").disabled = !state.canUndo;
  el<HTMLButtonElement>("redo").disabled = !state.canRedo;
}

function afterEdit(): void {
  refreshIssues();
  refreshHistoryButtons();
  draw();
}

function currentPreset(): TaskPreset | undefined {
  return presets.find((p) => p.kind === state.settings.kind);
}

function syncKindPanels(): void {
  const kind = state.settings.kind;
  el<HTMLElement>("panel-infill").hidden = kind !== "infillBox";
  el<HTMLElement>("panel-instruments").hidden = kind !== "instrumentation";
  el<HTMLElement>("panel-tonality").hidden = kind !== "tonality";
  el<HTMLElement>("panel-rhythm").hidden = kind !== "rhythm";
  el<HTMLElement>("panel-regen").hidden = kind !== "regenerateAttributes";
  el<HTMLElement>("panel-variation").hidden = kind !== "variation";
  const preset = currentPreset();
  if (preset) {
    el<HTMLInputElement>("steps").placeholder = String(preset.T);
    el<HTMLInputElement>("topp").placeholder = String(preset.top_p);
  }
  el<HTMLSelectElement>("preset").value = kind;
}

async function runGeneration(): Promise<void> {
  if (inFlight) return;
  const { task, issues } = compileTask(state.doc, state.settings);
  if (!task || issues.some((i) => i.startsWith("conflict:"))) {
    refreshIssues();
    return;
  }
  const req: GenerateRequest = { task, seed: state.settings.seed };
  if (state.settings.T !== null) req.T = state.settings.T;
  if (state.settings.topP !== null) req.top_p = state.settings.topP;
  lastRequest = req;
  await submitRequest(req);
}

async function submitRequest(req: GenerateRequest): Promise<void> {
  inFlight = true;
  refreshIssues();
  setStatus("submitting…");
  try {
    const result = await client.generateAndWait(req, (record) => {
      setStatus(`job ${record.job_id}: ${record.status}`);
    });
    const loop: Loop = {
      tokens: result.tokens,
      notes: result.notes,
      tempo_bpm: result.tempo_bpm,
      tag: result.tag,
    };
    state.acceptResult(loop);
    const skipped = result.skipped_slots.length;
    setStatus(
      `done: ${result.notes.length} notes, ${result.tempo_bpm.toFixed(1)} bpm` +
      (skipped ? `, ${skipped} malformed slots skipped` : ""),
    );
    if (player.isPlaying) player.play(loop);
  } catch (e) {
    const detail = e instanceof ServiceError ? e.message : String(e);
    setStatus(`generation failed: ${detail}`, "err");
  } finally {
    inFlight = false;
    afterEdit();
  }
}

function pointerBox(ev: PointerEvent): GridBox | null {
  if (!dragAnchor) return null;
  const rect = canvas.getBoundingClientRect();
  const beat = xToBeat(ev.clientX - rect.left, vp);
  const pitch = yToPitch(ev.clientY - rect.top, vp);
  return snapBox(dragAnchor.beat, dragAnchor.pitch, beat, pitch);
}

function wireCanvas(): void {
  canvas.addEventListener("pointerdown", (ev) => {
    const rect = canvas.getBoundingClientRect();
    dragAnchor = {
      beat: xToBeat(ev.clientX - rect.left, vp),
      pitch: yToPitch(ev.clientY - rect.top, vp),
    };
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragAnchor) return;
    rubber = pointerBox(ev);
    draw();
  });
  canvas.addEventListener("pointerup", (ev) => {
    const box = pointerBox(ev);
    dragAnchor = null;
    rubber = null;
    if (box) {
      state.paintConstraint(paintMode, box, {
        minNotes: Number(el<HTMLInputElement>("min-notes").value) || 1,
        maxNotes: Number(el<HTMLInputElement>("max-notes").value) || 8,
      });
      syncKindPanels();
    }
    afterEdit();
  });
}

function checkList(
  containerId: string, names: readonly string[], selected: string[],
  onChange: (next: string[]) => void,
): void {
  const box = el<HTMLElement>(containerId);
  box.replaceChildren(
    ...names.map((name) => {
      const label = document.createElement("label");
      const input = document.createElement("input");
      input.type = "checkbox";
      input.value = name;
      input.checked = selected.includes(name);
      input.addEventListener("change", () => {
        const picked = Array.from(
          box.querySelectorAll<HTMLInputElement>("input:checked"),
        ).map((i) => i.value);
        onChange(picked);
        afterEdit();
      });
      label.append(input, ` ${name}`);
      return label;
    }),
  );
}

function toggleRow(
  containerId: string, count: number, names: (i: number) => string,
  selected: number[], onChange: (next: number[]) => void,
): void {
  const box = el<HTMLElement>(containerId);
  box.replaceChildren(
    ...Array.from({ length: count }, (_, i) => {
      const btn = document.createElement("button");
      btn.type = "button";
      btn.textContent = names(i);
      btn.classList.toggle("on", selected.includes(i));
      btn.addEventListener("click", () => {
        btn.classList.toggle("on");
        const next = Array.from(box.querySelectorAll("button.on"))
          .map((b) => Number((b as HTMLButtonElement).dataset.index));
        onChange(next);
        afterEdit();
      });
      btn.dataset.index = String(i);
      return btn;
    }),
  );
}

function wireControls(): void {
  el<HTMLSelectElement>("preset").addEventListener("change", (ev) => {
    state.settings.kind = (ev.target as HTMLSelectElement).value as TaskKind;
    syncKindPanels();
    afterEdit();
  });
  for (const mode of ["infill", "erase", "pin"] as const) {
    el<HTMLInputElement>(`mode-${mode}`).addEventListener("change", () => {
      paintMode = mode;
    });
  }
  el<HTMLInputElement>("seed").addEventListener("change", (ev) => {
    state.settings.seed = Number((ev.target as HTMLInputElement).value) || 0;
  });
  el<HTMLInputElement>("steps").addEventListener("change", (ev) => {
    const raw = (ev.target as HTMLInputElement).value.trim();
    state.settings.T = raw === "" ? null : Math.max(1, Number(raw));
  });
  el<HTMLInputElement>("topp").addEventListener("change", (ev) => {
    const raw = (ev.target as HTMLInputElement).value.trim();
    state.settings.topP = raw === "" ? null : Number(raw);
  });
  const reveal = el<HTMLInputElement>("t-reveal");
  reveal.addEventListener("input", () => {
    state.settings.tReveal = Number(reveal.value);
    el<HTMLElement>("t-reveal-value").textContent = reveal.value;
    afterEdit();
  });
  el<HTMLButtonElement>("pin-all").addEventListener("click", () => {
    state.paintConstraint("pin", {
      beatLo: 0, beatHi: BEATS_PER_LOOP, pitchLo: PITCH_MIN, pitchHi: PITCH_MAX,
    });
    syncKindPanels();
    afterEdit();
  });
  el<HTMLButtonElement>("erase-all").addEventListener("click", () => {
    state.paintConstraint("erase", {
      beatLo: 0, beatHi: BEATS_PER_LOOP, pitchLo: PITCH_MIN, pitchHi: PITCH_MAX,
    });
    syncKindPanels();
    afterEdit();
  });
  el<HTMLButtonElement>("clear-layers").addEventListener("click", () => {
    state.clearLayers();
    afterEdit();
  });
  el<HTMLButtonElement>("undo").addEventListener("click", () => {
    state.undo();
    afterEdit();
  });
  el<HTMLButtonElement>("redo").addEventListener("click", () => {
    state.redo();
    afterEdit();
  });
  el<HTMLButtonElement>("generate").addEventListener("click", () => {
    void runGeneration();
  });
  el<HTMLButtonElement>("retry").addEventListener("click", () => {
    if (lastRequest) void submitRequest(lastRequest);
  });
  el<HTMLButtonElement>("play").addEventListener("click", () => {
    const loop = state.doc.loop;
    if (!loop) {
      setStatus("nothing to play yet", "warn");
      return;
    }
    player.play(loop);
    if (playheadTimer === null) {
      const tick = () => {
        draw();
        playheadTimer = player.isPlaying
          ? requestAnimationFrame(tick)
          : null;
      };
      playheadTimer = requestAnimationFrame(tick);
    }
  });
  el<HTMLButtonElement>("stop").addEventListener("click", () => {
    player.stop();
    draw();
  });

  checkList("instruments", INSTRUMENT_CLASSES,
    state.settings.instruments,
    (next) => { state.settings.instruments = next; });
  checkList("regen-instruments", INSTRUMENT_CLASSES,
    state.settings.regenInstruments,
    (next) => { state.settings.regenInstruments = next; });
  checkList("regen-attributes", ATTRIBUTES,
    state.settings.attributes,
    (next) => { state.settings.attributes = next; });
  checkList("mutes", INSTRUMENT_CLASSES, [],
    (next) => {
      player.muted.clear();
      for (const name of next) player.muted.add(name);
      draw();
    });
  toggleRow("pitch-classes", 12, (i) => PITCH_CLASS_NAMES[i],
    state.settings.pitchClasses,
    (next) => { state.settings.pitchClasses = next; });
  toggleRow("onset-beats", BEATS_PER_LOOP, (i) => String(i + 1),
    state.settings.onsetBeats,
    (next) => { state.settings.onsetBeats = next; });
}

async function boot(): Promise<void> {
  wireCanvas();
  wireControls();
  window.addEventListener("resize", resizeCanvas);
  resizeCanvas();
  syncKindPanels();
  afterEdit();
  try {
    const [health, listing] = await Promise.all([
      client.health(), client.taskList(),
    ]);
    presets = listing.presets;
    const select = el<HTMLSelectElement>("preset");
    select.replaceChildren(
      ...presets.map((p) => {
        const opt = document.createElement("option");
        opt.value = p.kind;
        opt.textContent = p.title;
        return opt;
      }),
    );
    select.value = state.settings.kind;
    el<HTMLElement>("service-info").textContent =
      `vocab ${health.versions.vocabulary} · ` +
      `ckpt ${health.versions.checkpoint} · ${health.n_slots} slots`;
    syncKindPanels();
    setStatus("ready");
  } catch (e) {
    setStatus(`service unreachable: ${String(e)}`, "err");
  }
}

void boot();
