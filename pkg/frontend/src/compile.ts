// Constraint layers + settings -> TaskSpec. The editor never builds
// prior rows itself; every spec produced here goes to the service's
// compile endpoint so prior semantics have one source of truth.

import { boxesOverlap } from "./grid.js";
import type { ConstraintLayer, EditorDoc, GenerationSettings } from "./state.js";
import { coversFullGrid } from "./state.js";
import type { TaskSpec } from "./types.js";

export interface CompiledTask {
  task: TaskSpec | null; // null when the document cannot compile yet
  issues: string[];      // conflicts and missing-input flags, shown inline
}

const NEEDS_LOOP = new Set([
  "fullyDetermined", "infillBox", "regenerateAttributes", "variation",
]);

/** Hard-constraint contradictions between painted layers. */
export function conflictIssues(layers: ConstraintLayer[]): string[] {
  const issues: string[] = [];
  const infills = layers.filter((l) => l.mode === "infill");
  for (const a of layers) {
    if (a.mode !== "pin") continue;
    for (const b of layers) {
      if (b.id <= a.id && b.mode === "pin") continue;
      if (b.mode === "pin") continue;
      if (boxesOverlap(a.box, b.box)) {
        issues.push(
          `conflict: pinned region (layer ${a.id}) overlaps ` +
          `${b.mode} region (layer ${b.id})`,
        );
      }
    }
  }
  if (infills.length > 1) {
    issues.push(
      `one infill box per generation; using layer ${infills[0].id}, ` +
      `ignoring ${infills.length - 1} more`,
    );
  }
  return issues;
}

function loopParam(doc: EditorDoc): Record<string, unknown> {
  // tokens are the authoritative loop payload; notes are display-only
  return { tokens: doc.loop!.tokens };
}

export function compileTask(
  doc: EditorDoc, settings: GenerationSettings,
): CompiledTask {
  const issues = conflictIssues(doc.layers);
  let kind = settings.kind;

  // erasing the whole grid drops the conditioning source entirely
  const erasedAll = doc.layers.some(
    (l) => l.mode === "erase" && coversFullGrid(l.box),
  );
  if (erasedAll && NEEDS_LOOP.has(kind)) kind = "unconditional";

  // reveal-nothing variation degenerates to exact reproduction; the
  // service rejects t_reveal = 0, so map the slider endpoint here
  if (kind === "variation" && settings.tReveal <= 0) kind = "fullyDetermined";

  if (NEEDS_LOOP.has(kind) && doc.loop === null) {
    issues.push(`${kind} needs a source loop; generate or load one first`);
    return { task: null, issues };
  }

  switch (kind) {
    case "unconditional":
      return { task: { kind, params: {} }, issues };
    case "fullyDetermined":
      return { task: { kind, params: { loop: loopParam(doc) } }, issues };
    case "infillBox": {
      const box = doc.layers.find((l) => l.mode === "infill");
      if (!box) {
        issues.push("paint an infill box first");
        return { task: null, issues };
      }
      return {
        task: {
          kind,
          params: {
            loop: loopParam(doc),
            time_range: [box.box.beatLo, box.box.beatHi],
            pitch_range: [box.box.pitchLo, box.box.pitchHi],
            min_notes: box.minNotes,
            max_notes: box.maxNotes,
            pin_tempo_tag: true,
          },
        },
        issues,
      };
    }
    case "instrumentation":
      if (settings.instruments.length === 0) {
        issues.push("pick at least one instrument class");
        return { task: null, issues };
      }
      return {
        task: { kind, params: { instruments: [...settings.instruments] } },
        issues,
      };
    case "tonality":
      if (settings.pitchClasses.length === 0) {
        issues.push("pick at least one pitch class");
        return { task: null, issues };
      }
      return {
        task: { kind, params: { pitch_classes: [...settings.pitchClasses] } },
        issues,
      };
    case "rhythm":
      if (settings.onsetBeats.length === 0) {
        issues.push("pick at least one onset beat");
        return { task: null, issues };
      }
      return {
        task: {
          kind,
          params: { onsets: settings.onsetBeats.map((b) => [b, 0]) },
        },
        issues,
      };
    case "regenerateAttributes":
      if (settings.attributes.length === 0 ||
          settings.regenInstruments.length === 0) {
        issues.push("pick attributes and instrument classes to regenerate");
        return { task: null, issues };
      }
      return {
        task: {
          kind,
          params: {
            loop: loopParam(doc),
            attributes: [...settings.attributes],
            instruments: [...settings.regenInstruments],
          },
        },
        issues,
      };
    case "variation":
      return {
        task: {
          kind,
          params: {
            loop: loopParam(doc),
            t_reveal: Math.min(1, settings.tReveal),
          },
        },
        issues,
      };
  }
}
