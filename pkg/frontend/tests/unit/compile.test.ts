import { describe, expect, it } from "vitest";

import { compileTask, conflictIssues } from "../../src/compile.js";
import { EditorState, defaultSettings } from "../../src/state.js";
import type { Loop } from "../../src/types.js";

const FULL = { beatLo: 0, beatHi: 16, pitchLo: 0, pitchHi: 126 };
const BOX = { beatLo: 4, beatHi: 8, pitchLo: 48, pitchHi: 72 };

function loop(): Loop {
  return {
    tokens: [[0, 1, 2, 3, 4, 5, 6, 7, 8]],
    notes: [],
    tempo_bpm: 120,
    tag: "rock",
  };
}

function stateWithLoop(): EditorState {
  const s = new EditorState();
  s.setLoop(loop());
  return s;
}

describe("task compilation", () => {
  it("erase-all maps to the unconditional preset", () => {
    const s = stateWithLoop();
    s.settings.kind = "fullyDetermined";
    s.paintConstraint("erase", FULL);
    const { task, issues } = compileTask(s.doc, s.settings);
    expect(issues).toEqual([]);
    expect(task).toEqual({ kind: "unconditional", params: {} });
  });

  it("pin entire loop maps to the fullyDetermined preset", () => {
    const s = stateWithLoop();
    s.paintConstraint("pin", FULL);
    expect(s.settings.kind).toBe("fullyDetermined");
    const { task, issues } = compileTask(s.doc, s.settings);
    expect(issues).toEqual([]);
    expect(task?.kind).toBe("fullyDetermined");
    expect(task?.params.loop).toEqual({ tokens: s.doc.loop!.tokens });
  });

  it("an infill box carries its region and note-count bounds", () => {
    const s = stateWithLoop();
    s.paintConstraint("infill", BOX, { minNotes: 1, maxNotes: 8 });
    const { task, issues } = compileTask(s.doc, s.settings);
    expect(issues).toEqual([]);
    expect(task).toEqual({
      kind: "infillBox",
      params: {
        loop: { tokens: s.doc.loop!.tokens },
        time_range: [4, 8],
        pitch_range: [48, 72],
        min_notes: 1,
        max_notes: 8,
        pin_tempo_tag: true,
      },
    });
  });

  it("variation at slider 0 degenerates to fullyDetermined", () => {
    const s = stateWithLoop();
    s.settings.kind = "variation";
    s.settings.tReveal = 0;
    const { task, issues } = compileTask(s.doc, s.settings);
    expect(issues).toEqual([]);
    expect(task?.kind).toBe("fullyDetermined");
  });

  it("variation above 0 keeps its reveal fraction", () => {
    const s = stateWithLoop();
    s.settings.kind = "variation";
    s.settings.tReveal = 0.35;
    const { task } = compileTask(s.doc, s.settings);
    expect(task?.kind).toBe("variation");
    expect(task?.params.t_reveal).toBe(0.35);
  });

  it("flags overlapping pin and infill as a conflict", () => {
    const s = stateWithLoop();
    s.paintConstraint("infill", BOX);
    s.paintConstraint("pin", { beatLo: 6, beatHi: 10, pitchLo: 60, pitchHi: 80 });
    const { issues } = compileTask(s.doc, s.settings);
    expect(issues.some((i) => i.startsWith("conflict:"))).toBe(true);
  });

  it("disjoint pin and infill regions do not conflict", () => {
    const issues = conflictIssues([
      { id: 1, mode: "infill", box: BOX, minNotes: 1, maxNotes: 8 },
      {
        id: 2, mode: "pin",
        box: { beatLo: 8, beatHi: 12, pitchLo: 48, pitchHi: 72 },
        minNotes: 1, maxNotes: 8,
      },
    ]);
    expect(issues).toEqual([]);
  });

  it("extra infill boxes are flagged and the first wins", () => {
    const s = stateWithLoop();
    s.paintConstraint("infill", BOX);
    s.paintConstraint("infill", {
      beatLo: 10, beatHi: 12, pitchLo: 30, pitchHi: 40,
    });
    const { task, issues } = compileTask(s.doc, s.settings);
    expect(issues.length).toBeGreaterThan(0);
    expect(task?.params.time_range).toEqual([4, 8]);
  });

  it("loop-conditioned kinds refuse to compile without a loop", () => {
    const s = new EditorState();
    for (const kind of [
      "fullyDetermined", "infillBox", "regenerateAttributes", "variation",
    ] as const) {
      s.settings.kind = kind;
      const { task, issues } = compileTask(s.doc, s.settings);
      expect(task).toBeNull();
      expect(issues.length).toBeGreaterThan(0);
    }
  });

  it("infillBox without a painted box asks for one", () => {
    const s = stateWithLoop();
    s.settings.kind = "infillBox";
    const { task, issues } = compileTask(s.doc, s.settings);
    expect(task).toBeNull();
    expect(issues.some((i) => i.includes("infill box"))).toBe(true);
  });

  it("selection presets serialize their settings", () => {
    const s = new EditorState();
    s.settings.kind = "instrumentation";
    expect(compileTask(s.doc, s.settings).task).toEqual({
      kind: "instrumentation",
      params: { instruments: ["Drums", "Bass"] },
    });
    s.settings.kind = "tonality";
    expect(compileTask(s.doc, s.settings).task).toEqual({
      kind: "tonality",
      params: { pitch_classes: [0, 2, 4, 5, 7, 9, 11] },
    });
    s.settings.kind = "rhythm";
    const rhythm = compileTask(s.doc, s.settings).task;
    expect(rhythm?.params.onsets).toEqual(
      Array.from({ length: 16 }, (_, b) => [b, 0]),
    );
  });

  it("regenerateAttributes carries attributes, classes, and the loop", () => {
    const s = stateWithLoop();
    s.settings.kind = "regenerateAttributes";
    const { task, issues } = compileTask(s.doc, s.settings);
    expect(issues).toEqual([]);
    expect(task).toEqual({
      kind: "regenerateAttributes",
      params: {
        loop: { tokens: s.doc.loop!.tokens },
        attributes: ["pitch"],
        instruments: ["Bass"],
      },
    });
  });

  it("empty selections surface as issues, not bad requests", () => {
    const s = new EditorState();
    s.settings.kind = "instrumentation";
    s.settings.instruments = [];
    expect(compileTask(s.doc, s.settings).task).toBeNull();
    s.settings = defaultSettings();
    s.settings.kind = "tonality";
    s.settings.pitchClasses = [];
    expect(compileTask(s.doc, s.settings).task).toBeNull();
    s.settings = defaultSettings();
    s.settings.kind = "rhythm";
    s.settings.onsetBeats = [];
    expect(compileTask(s.doc, s.settings).task).toBeNull();
  });
});
