// Loop geometry: 16 beats x 24 ticks, pitches drawn high-to-low. All
// pixel math lives here so painting and rendering share one mapping.

import type { NoteEvent } from "./types.js";

export const BEATS_PER_LOOP = 16;
export const TICKS_PER_BEAT = 24;
export const STEPS_PER_LOOP = BEATS_PER_LOOP * TICKS_PER_BEAT;

export const PITCH_MIN = 0;
export const PITCH_MAX = 126;
export const DRUM_KEY_LO = 35;
export const DRUM_KEY_HI = 81;

export interface GridBox {
  // half-open beat range, inclusive pitch range, matching infill params
  beatLo: number;
  beatHi: number;
  pitchLo: number;
  pitchHi: number;
}

export interface Viewport {
  width: number;
  height: number;
  pitchLo: number; // lowest pitch on screen (drawn at the bottom)
  pitchHi: number;
}

export function beatsOf(ev: NoteEvent): { on: number; off: number } {
  const on = ev.onset_beat + ev.onset_tick / TICKS_PER_BEAT;
  if (ev.offset_beat === null || ev.offset_tick === null) {
    // drums render as a fixed sliver
    return { on, off: on + 0.25 };
  }
  return { on, off: ev.offset_beat + ev.offset_tick / TICKS_PER_BEAT };
}

export function loopSeconds(tempoBpm: number): number {
  return (BEATS_PER_LOOP * 60) / tempoBpm;
}

export function beatToX(beat: number, vp: Viewport): number {
  return (beat / BEATS_PER_LOOP) * vp.width;
}

export function xToBeat(x: number, vp: Viewport): number {
  const beat = (x / vp.width) * BEATS_PER_LOOP;
  return Math.min(BEATS_PER_LOOP, Math.max(0, beat));
}

export function pitchToY(pitch: number, vp: Viewport): number {
  // y of the TOP edge of the pitch row
  const rows = vp.pitchHi - vp.pitchLo + 1;
  return ((vp.pitchHi - pitch) / rows) * vp.height;
}

export function yToPitch(y: number, vp: Viewport): number {
  const rows = vp.pitchHi - vp.pitchLo + 1;
  const pitch = vp.pitchHi - Math.floor((y / vp.height) * rows);
  return Math.min(vp.pitchHi, Math.max(vp.pitchLo, pitch));
}

export function rowHeight(vp: Viewport): number {
  return vp.height / (vp.pitchHi - vp.pitchLo + 1);
}

/** Snap a dragged rectangle to whole beats and pitches, normalized. */
export function snapBox(
  beatA: number, pitchA: number, beatB: number, pitchB: number,
): GridBox {
  let beatLo = Math.floor(Math.min(beatA, beatB));
  let beatHi = Math.ceil(Math.max(beatA, beatB));
  beatLo = Math.max(0, beatLo);
  beatHi = Math.min(BEATS_PER_LOOP, Math.max(beatHi, beatLo + 1));
  const pitchLo = Math.max(PITCH_MIN, Math.min(pitchA, pitchB));
  const pitchHi = Math.min(PITCH_MAX, Math.max(pitchA, pitchB));
  return { beatLo, beatHi, pitchLo, pitchHi };
}

export function noteInBox(ev: NoteEvent, box: GridBox): boolean {
  if (ev.is_drum) return false; // boxes constrain melodic notes only
  const on = ev.onset_beat + ev.onset_tick / TICKS_PER_BEAT;
  return (
    on >= box.beatLo && on < box.beatHi &&
    ev.pitch >= box.pitchLo && ev.pitch <= box.pitchHi
  );
}

export function boxesOverlap(a: GridBox, b: GridBox): boolean {
  return (
    a.beatLo < b.beatHi && b.beatLo < a.beatHi &&
    a.pitchLo <= b.pitchHi && b.pitchLo <= a.pitchHi
  );
}
