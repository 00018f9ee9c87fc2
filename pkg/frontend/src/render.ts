// Canvas piano roll. Pinned notes draw solid, constraint layers shade
// their regions: infill = free-to-generate, erase = discarded, pin =
// held verbatim. Shown at 1/8-note gridlines; painting snaps to beats.

import {
  BEATS_PER_LOOP, beatToX, beatsOf, pitchToY, rowHeight,
} from "./grid.js";
import type { GridBox, Viewport } from "./grid.js";
import type { ConstraintLayer } from "./state.js";
import type { NoteEvent } from "./types.js";

const CLASS_COLORS: Record<string, string> = {
  Piano: "#4e9be0",
  Bass: "#e0734e",
  Drums: "#9a9a9a",
  Guitar: "#50b878",
  Strings: "#b06fd4",
  Organ: "#3fb3ad",
  Brass: "#d4b13f",
  "Synth Lead": "#e05c8a",
  "Synth Pad": "#7a84e0",
};

export function colorFor(instrument: string): string {
  return CLASS_COLORS[instrument] ?? "#7fa6b8";
}

function layerFill(mode: ConstraintLayer["mode"]): string {
  if (mode === "infill") return "rgba(80, 200, 120, 0.18)";
  if (mode === "erase") return "rgba(200, 80, 80, 0.15)";
  return "rgba(120, 150, 230, 0.18)";
}

function layerStroke(mode: ConstraintLayer["mode"]): string {
  if (mode === "infill") return "rgba(60, 180, 100, 0.9)";
  if (mode === "erase") return "rgba(200, 80, 80, 0.9)";
  return "rgba(110, 140, 220, 0.9)";
}

function boxRect(box: GridBox, vp: Viewport): [number, number, number, number] {
  const x = beatToX(box.beatLo, vp);
  const w = beatToX(box.beatHi, vp) - x;
  const yTop = pitchToY(box.pitchHi, vp);
  const yBot = pitchToY(box.pitchLo, vp) + rowHeight(vp);
  return [x, yTop, w, yBot - yTop];
}

export function drawGrid(ctx: CanvasRenderingContext2D, vp: Viewport): void {
  ctx.save();
  ctx.fillStyle = "#14171c";
  ctx.fillRect(0, 0, vp.width, vp.height);
  // octave bands
  const rh = rowHeight(vp);
  for (let p = vp.pitchLo; p <= vp.pitchHi; p++) {
    const pc = p % 12;
    if (pc === 1 || pc === 3 || pc === 6 || pc === 8 || pc === 10) {
      ctx.fillStyle = "rgba(255,255,255,0.03)";
      ctx.fillRect(0, pitchToY(p, vp), vp.width, rh);
    }
  }
  // eighth-note lines, heavier on beats, heaviest on bars
  for (let half = 0; half <= BEATS_PER_LOOP * 2; half++) {
    const beat = half / 2;
    const x = beatToX(beat, vp);
    if (half % 8 === 0) ctx.strokeStyle = "rgba(255,255,255,0.35)";
    else if (half % 2 === 0) ctx.strokeStyle = "rgba(255,255,255,0.15)";
    else ctx.strokeStyle = "rgba(255,255,255,0.06)";
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, vp.height);
    ctx.stroke();
  }
  ctx.restore();
}

export function drawNotes(
  ctx: CanvasRenderingContext2D, notes: NoteEvent[], vp: Viewport,
  mutedClasses: ReadonlySet<string>,
): void {
  ctx.save();
  const rh = rowHeight(vp);
  for (const ev of notes) {
    const { on, off } = beatsOf(ev);
    const x = beatToX(on, vp);
    const w = Math.max(2, beatToX(off, vp) - x);
    const y = pitchToY(ev.pitch, vp);
    ctx.globalAlpha = mutedClasses.has(ev.instrument) ? 0.25 : 1;
    ctx.fillStyle = colorFor(ev.instrument);
    if (ev.is_drum) {
      ctx.beginPath();
      ctx.moveTo(x, y + rh);
      ctx.lineTo(x + Math.max(4, rh * 0.7), y + rh);
      ctx.lineTo(x, y);
      ctx.closePath();
      ctx.fill();
    } else {
      ctx.fillRect(x, y + 0.5, w, Math.max(1, rh - 1));
    }
  }
  ctx.restore();
}

export function drawLayers(
  ctx: CanvasRenderingContext2D, layers: ConstraintLayer[], vp: Viewport,
): void {
  ctx.save();
  for (const layer of layers) {
    const [x, y, w, h] = boxRect(layer.box, vp);
    ctx.fillStyle = layerFill(layer.mode);
    ctx.fillRect(x, y, w, h);
    ctx.strokeStyle = layerStroke(layer.mode);
    ctx.setLineDash(layer.mode === "erase" ? [5, 4] : []);
    ctx.strokeRect(x + 0.5, y + 0.5, w - 1, h - 1);
    ctx.setLineDash([]);
  }
  ctx.restore();
}

export function drawRubberBand(
  ctx: CanvasRenderingContext2D, box: GridBox, vp: Viewport,
): void {
  ctx.save();
  const [x, y, w, h] = boxRect(box, vp);
  ctx.strokeStyle = "rgba(255,255,255,0.8)";
  ctx.setLineDash([4, 3]);
  ctx.strokeRect(x + 0.5, y + 0.5, w - 1, h - 1);
  ctx.restore();
}

export function drawPlayhead(
  ctx: CanvasRenderingContext2D, beat: number, vp: Viewport,
): void {
  ctx.save();
  const x = beatToX(beat, vp);
  ctx.strokeStyle = "rgba(255, 220, 90, 0.9)";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(x, 0);
  ctx.lineTo(x, vp.height);
  ctx.stroke();
  ctx.restore();
}
