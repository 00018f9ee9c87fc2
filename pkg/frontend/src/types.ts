// Wire shapes of the generation service. Tokens are opaque vocabulary
// indices; the editor never interprets them beyond equality and replay.
// The decoded note list travelling alongside is what gets drawn and played.

export interface NoteEvent {
  instrument: string;
  pitch: number;
  is_drum: boolean;
  onset_beat: number;
  onset_tick: number;
  offset_beat: number | null; // null for drums
  offset_tick: number | null;
  velocity: number;
}

export type TokenMatrix = number[][]; // n_slots rows x 9 attribute columns

export interface Loop {
  tokens: TokenMatrix;
  notes: NoteEvent[];
  tempo_bpm: number;
  tag: string;
}

export type TaskKind =
  | "unconditional"
  | "fullyDetermined"
  | "infillBox"
  | "instrumentation"
  | "tonality"
  | "rhythm"
  | "regenerateAttributes"
  | "variation";

export interface TaskSpec {
  kind: TaskKind;
  params: Record<string, unknown>;
}

export interface TaskPreset {
  kind: TaskKind;
  title: string;
  T: number;
  top_p: number;
  needs_loop: boolean;
  defaults: Record<string, unknown>;
}

export interface Versions {
  vocabulary: string;
  checkpoint: string;
}

export interface HealthInfo {
  status: string;
  n_slots: number;
  jobs: Record<string, number>;
  versions: Versions;
}

export interface TaskListing {
  presets: TaskPreset[];
  n_slots: number;
  versions: Versions;
}

export interface CompileOutcome {
  prior: Record<string, unknown>;
  suggested: { T: number; top_p: number };
  issues: string[];
  versions: Versions;
}

export interface GenerateRequest {
  prior?: Record<string, unknown>;
  task?: TaskSpec;
  T?: number;
  top_p?: number;
  seed: number;
  checkpoint?: string;
  output?: "tokens" | "midi" | "both";
}

export type JobState = "queued" | "running" | "done" | "failed";

export interface JobRecord {
  job_id: string;
  kind: string;
  status: JobState;
  created: number;
  started: number | null;
  finished: number | null;
  error: string | null;
  echo: Record<string, unknown> | null;
  versions: Versions;
}

export interface GenerateResult {
  job_id: string;
  tokens: TokenMatrix;
  notes: NoteEvent[];
  tempo_bpm: number;
  tag: string;
  skipped_slots: number[];
  echo: Record<string, unknown>;
  versions: Versions;
}

export interface FieldError {
  field: string;
  message: string;
}

export interface ErrorBody {
  errors: FieldError[];
  versions: Versions;
}

export const INSTRUMENT_CLASSES = [
  "Piano", "Chromatic Percussion", "Organ", "Guitar", "Bass", "Strings",
  "Ensemble", "Brass", "Reed", "Flute", "Pipe", "Synth Lead", "Synth Pad",
  "Synth Effects", "Ethnic", "Percussive", "Sound Effects", "Drums",
] as const;

export type InstrumentClass = (typeof INSTRUMENT_CLASSES)[number];
