// In-browser audition. Melodic classes get oscillator voices, drums get
// noise bursts; the transport loops the 4 bars until stopped. The audio
// context is injected so scheduling is testable without a speaker.

import { beatsOf, loopSeconds } from "./grid.js";
import type { NoteEvent } from "./types.js";

export interface Voice {
  startSec: number;
  durSec: number;
  pitch: number;
  instrument: string;
  isDrum: boolean;
  gain: number; // 0..1 from velocity
}

export function pitchToFreq(pitch: number): number {
  return 440 * Math.pow(2, (pitch - 69) / 12);
}

/** One pass of the loop as absolute offsets from the pass start. */
export function schedulePass(
  notes: NoteEvent[], tempoBpm: number,
): { voices: Voice[]; passSeconds: number } {
  const passSeconds = loopSeconds(tempoBpm);
  const secPerBeat = 60 / tempoBpm;
  const voices: Voice[] = [];
  for (const ev of notes) {
    const { on, off } = beatsOf(ev);
    voices.push({
      startSec: on * secPerBeat,
      durSec: Math.max(0.05, (off - on) * secPerBeat),
      pitch: ev.pitch,
      instrument: ev.instrument,
      isDrum: ev.is_drum,
      gain: Math.min(1, Math.max(0.05, ev.velocity / 127)),
    });
  }
  return { voices, passSeconds };
}

// rough timbre map; anything unlisted falls back to a triangle wave
const WAVEFORMS: Record<string, OscillatorType> = {
  Piano: "triangle",
  "Chromatic Percussion": "triangle",
  Organ: "sine",
  Guitar: "triangle",
  Bass: "sawtooth",
  Strings: "sawtooth",
  Ensemble: "sawtooth",
  Brass: "square",
  Reed: "square",
  Flute: "sine",
  Pipe: "sine",
  "Synth Lead": "square",
  "Synth Pad": "sine",
  "Synth Effects": "sawtooth",
  Ethnic: "triangle",
  Percussive: "triangle",
  "Sound Effects": "square",
};

// minimal slice of the WebAudio surface, narrow enough to fake in tests
export interface AudioContextLike {
  currentTime: number;
  destination: unknown;
  sampleRate: number;
  createOscillator(): OscillatorLike;
  createGain(): GainLike;
  createBuffer(ch: number, len: number, rate: number): AudioBufferLike;
  createBufferSource(): BufferSourceLike;
  close(): Promise<void> | void;
}

export interface OscillatorLike {
  type: OscillatorType;
  frequency: { value: number };
  connect(node: unknown): unknown;
  start(when: number): void;
  stop(when: number): void;
}

export interface GainLike {
  gain: {
    value: number;
    setValueAtTime(v: number, t: number): void;
    exponentialRampToValueAtTime(v: number, t: number): void;
  };
  connect(node: unknown): unknown;
}

export interface AudioBufferLike {
  getChannelData(ch: number): Float32Array;
}

export interface BufferSourceLike {
  buffer: AudioBufferLike | null;
  connect(node: unknown): unknown;
  start(when: number): void;
  stop(when: number): void;
}

export interface LoopAudio {
  notes: NoteEvent[];
  tempo_bpm: number;
}

const SCHEDULE_AHEAD_PASSES = 2;
const TICK_MS = 250;

export class Player {
  readonly muted: Set<string>;
  private makeContext: () => AudioContextLike;
  private ctx: AudioContextLike | null;
  private timer: ReturnType<typeof setInterval> | null;
  private startTime: number;
  private scheduledThrough: number; // pass index scheduled so far
  private loop: LoopAudio | null;
  private warn: (message: string) => void;

  constructor(
    makeContext: () => AudioContextLike,
    warn: (message: string) => void = () => {},
  ) {
    this.makeContext = makeContext;
    this.warn = warn;
    this.muted = new Set();
    this.ctx = null;
    this.timer = null;
    this.startTime = 0;
    this.scheduledThrough = 0;
    this.loop = null;
  }

  get isPlaying(): boolean {
    return this.ctx !== null;
  }

  /** Beat position inside the current pass, for the playhead. */
  positionBeats(): number {
    if (!this.ctx || !this.loop) return 0;
    const pass = loopSeconds(this.loop.tempo_bpm);
    const t = (this.ctx.currentTime - this.startTime) % pass;
    return Math.max(0, (t / pass) * 16);
  }

  play(loop: LoopAudio): void {
    this.stop();
    let ctx: AudioContextLike;
    try {
      ctx = this.makeContext();
    } catch (e) {
      this.warn(`audio unavailable: ${String(e)}`);
      return;
    }
    this.ctx = ctx;
    this.loop = loop;
    this.startTime = ctx.currentTime + 0.05;
    this.scheduledThrough = 0;
    this.pump();
    this.timer = setInterval(() => this.pump(), TICK_MS);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    if (this.ctx) {
      try {
        void this.ctx.close();
      } catch {
        // context already closed; nothing to release
      }
      this.ctx = null;
    }
    this.loop = null;
  }

  toggleMute(instrument: string): boolean {
    if (this.muted.has(instrument)) {
      this.muted.delete(instrument);
      return false;
    }
    this.muted.add(instrument);
    return true;
  }

  private pump(): void {
    if (!this.ctx || !this.loop) return;
    const { voices, passSeconds } = schedulePass(
      this.loop.notes, this.loop.tempo_bpm,
    );
    const now = this.ctx.currentTime;
    while (
      this.startTime + this.scheduledThrough * passSeconds <
      now + SCHEDULE_AHEAD_PASSES * passSeconds
    ) {
      const base = this.startTime + this.scheduledThrough * passSeconds;
      for (const v of voices) {
        if (this.muted.has(v.instrument)) continue;
        this.playVoice(v, base);
      }
      this.scheduledThrough += 1;
    }
  }

  private playVoice(v: Voice, base: number): void {
    const ctx = this.ctx!;
    const t0 = base + v.startSec;
    const gainNode = ctx.createGain();
    gainNode.gain.value = 0.12 * v.gain;
    gainNode.connect(ctx.destination);
    if (v.isDrum) {
      // short noise burst; pitch only shades the decay a little
      const len = Math.max(1, Math.floor(ctx.sampleRate * 0.08));
      const buf = ctx.createBuffer(1, len, ctx.sampleRate);
      const data = buf.getChannelData(0);
      for (let i = 0; i < len; i++) {
        data[i] = (Math.random() * 2 - 1) * (1 - i / len);
      }
      const src = ctx.createBufferSource();
      src.buffer = buf;
      src.connect(gainNode);
      src.start(t0);
      src.stop(t0 + 0.1);
    } else {
      const osc = ctx.createOscillator();
      osc.type = WAVEFORMS[v.instrument] ?? "triangle";
      osc.frequency.value = pitchToFreq(v.pitch);
      osc.connect(gainNode);
      gainNode.gain.setValueAtTime(0.12 * v.gain, t0);
      gainNode.gain.exponentialRampToValueAtTime(0.001, t0 + v.durSec);
      osc.start(t0);
      osc.stop(t0 + v.durSec + 0.02);
    }
  }
}
