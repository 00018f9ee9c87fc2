import { describe, expect, it } from "vitest";

import { EditorState } from "../../src/state.js";
import type { EditorDoc } from "../../src/state.js";
import type { Loop } from "../../src/types.js";

// deterministic PRNG so the random edit walk is replayable
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function fakeLoop(tagSalt: number): Loop {
  return {
    tokens: [[tagSalt, 1, 2, 3, 4, 5, 6, 7, 8]],
    notes: [{
      instrument: "Piano", pitch: 60 + (tagSalt % 12), is_drum: false,
      onset_beat: tagSalt % 16, onset_tick: 0,
      offset_beat: (tagSalt % 16) + 1 > 15 ? 15 : (tagSalt % 16) + 1,
      offset_tick: 0, velocity: 100,
    }],
    tempo_bpm: 120,
    tag: `t${tagSalt}`,
  };
}

function randomBox(rand: () => number) {
  const beatLo = Math.floor(rand() * 15);
  const pitchLo = Math.floor(rand() * 100);
  return {
    beatLo,
    beatHi: beatLo + 1 + Math.floor(rand() * (16 - beatLo - 1)),
    pitchLo,
    pitchHi: pitchLo + Math.floor(rand() * (126 - pitchLo)),
  };
}

function snap(doc: EditorDoc): string {
  return JSON.stringify(doc);
}

describe("editor history", () => {
  it("starts empty with nothing to undo", () => {
    const s = new EditorState();
    expect(s.doc.loop).toBeNull();
    expect(s.doc.layers).toEqual([]);
    expect(s.canUndo).toBe(false);
    expect(s.canRedo).toBe(false);
  });

  it("undo/redo is lossless over 100 random edit sequences", () => {
    for (let seq = 0; seq < 100; seq++) {
      const rand = mulberry32(1000 + seq);
      const s = new EditorState();
      const snapshots: string[] = [snap(s.doc)];
      const edits = 3 + Math.floor(rand() * 12);
      for (let k = 0; k < edits; k++) {
        const roll = rand();
        if (roll < 0.3) {
          s.setLoop(fakeLoop(Math.floor(rand() * 1000)));
        } else if (roll < 0.65) {
          const mode = (["infill", "erase", "pin"] as const)[
            Math.floor(rand() * 3)
          ];
          s.paintConstraint(mode, randomBox(rand), {
            minNotes: 1 + Math.floor(rand() * 3),
            maxNotes: 4 + Math.floor(rand() * 8),
          });
        } else if (roll < 0.8 && s.doc.layers.length > 0) {
          const victim = s.doc.layers[
            Math.floor(rand() * s.doc.layers.length)
          ];
          s.removeLayer(victim.id);
        } else {
          s.clearLayers();
        }
        snapshots.push(snap(s.doc));
      }
      // walk all the way back, checking every snapshot verbatim
      for (let k = snapshots.length - 1; k >= 0; k--) {
        expect(snap(s.doc)).toBe(snapshots[k]);
        if (k > 0) expect(s.undo()).toBe(true);
      }
      expect(s.canUndo).toBe(false);
      // and forward again
      for (let k = 0; k < snapshots.length; k++) {
        expect(snap(s.doc)).toBe(snapshots[k]);
        if (k < snapshots.length - 1) expect(s.redo()).toBe(true);
      }
      expect(s.canRedo).toBe(false);
    }
  });

  it("supports undo to any prior snapshot directly", () => {
    const s = new EditorState();
    const seen: string[] = [snap(s.doc)];
    for (let i = 0; i < 6; i++) {
      s.paintConstraint("pin", {
        beatLo: i, beatHi: i + 1, pitchLo: 40, pitchHi: 50,
      });
      seen.push(snap(s.doc));
    }
    for (const target of [0, 3, 6, 2, 5]) {
      expect(s.undoTo(target)).toBe(true);
      expect(snap(s.doc)).toBe(seen[target]);
    }
    expect(s.undoTo(99)).toBe(false);
    expect(s.undoTo(-1)).toBe(false);
  });

  it("an edit after undo drops the redo tail", () => {
    const s = new EditorState();
    s.setLoop(fakeLoop(1));
    s.setLoop(fakeLoop(2));
    s.undo();
    expect(s.canRedo).toBe(true);
    s.paintConstraint("infill", {
      beatLo: 0, beatHi: 4, pitchLo: 50, pitchHi: 70,
    });
    expect(s.canRedo).toBe(false);
    expect(s.doc.loop?.tag).toBe("t1");
    expect(s.doc.layers).toHaveLength(1);
  });

  it("history snapshots are isolated from later mutation", () => {
    const s = new EditorState();
    const loop = fakeLoop(7);
    s.setLoop(loop);
    loop.tag = "mutated";
    loop.notes[0].pitch = 1;
    expect(s.doc.loop?.tag).toBe("t7");
    expect(s.doc.loop?.notes[0].pitch).toBe(67);
    const before = snap(s.doc);
    s.paintConstraint("pin", { beatLo: 0, beatHi: 1, pitchLo: 0, pitchHi: 5 });
    s.undo();
    expect(snap(s.doc)).toBe(before);
  });

  it("painting gestures steer the task preset", () => {
    const s = new EditorState();
    s.paintConstraint("infill", {
      beatLo: 4, beatHi: 8, pitchLo: 48, pitchHi: 72,
    });
    expect(s.settings.kind).toBe("infillBox");
    s.paintConstraint("pin", {
      beatLo: 0, beatHi: 16, pitchLo: 0, pitchHi: 126,
    });
    expect(s.settings.kind).toBe("fullyDetermined");
    s.paintConstraint("erase", {
      beatLo: 0, beatHi: 16, pitchLo: 0, pitchHi: 126,
    });
    expect(s.settings.kind).toBe("unconditional");
    // a partial erase is just a layer, not a preset change
    s.settings.kind = "variation";
    s.paintConstraint("erase", {
      beatLo: 0, beatHi: 2, pitchLo: 0, pitchHi: 126,
    });
    expect(s.settings.kind).toBe("variation");
  });
});
