// Global setup: boot a real generation service on a random-init
// checkpoint so contract tests exercise the live HTTP surface. The
// contract is about validation, pins, and determinism, not quality,
// so untrained weights are fine. Connection info lands in a JSON file
// next to the frontend so test files can read it without vitest APIs.

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));
export const INFO_PATH = join(here, "..", "..", ".contract-server.json");

let child: ChildProcess | null = null;
let workDir = "";

const SETUP_PY = `
import json, sys
import numpy as np
from loopdiff.checkpoint import save_params
from loopdiff.codec import LoopSample, NoteEvent, decode_loop, encode_loop
from loopdiff.model import DenoiserConfig, init_params
from loopdiff.vocab import build_vocabulary

ckpt_path, loop_path = sys.argv[1], sys.argv[2]
vocab = build_vocabulary()
cfg = DenoiserConfig.desk(vocab)
params = init_params(cfg, vocab, np.random.default_rng(0))
save_params(ckpt_path, params, cfg.to_dict(), vocab.version)

events = [
    NoteEvent("Piano", 60, 0, 0, 1, 0, 96),
    NoteEvent("Piano", 64, 2, 0, 3, 0, 90),
    NoteEvent("Piano", 55, 5, 0, 6, 0, 84),
    NoteEvent("Piano", 67, 12, 0, 14, 0, 80),
    NoteEvent("Bass", 36, 0, 0, 2, 0, 100),
    NoteEvent("Bass", 43, 8, 0, 10, 0, 100),
    NoteEvent("Drums", 38, 4, 0, None, None, 110),
]
sample = LoopSample(events, 120.0, "rock")
tok = encode_loop(sample, cfg.n_slots, vocab)
back = decode_loop(tok, vocab)
notes = [
    {
        "instrument": e.instrument, "pitch": e.pitch, "is_drum": e.is_drum,
        "onset_beat": e.onset_beat, "onset_tick": e.onset_tick,
        "offset_beat": e.offset_beat, "offset_tick": e.offset_tick,
        "velocity": e.velocity,
    }
    for e in back.events
]
with open(loop_path, "w") as f:
    json.dump({"tokens": tok.tokens.tolist(), "notes": notes,
               "tempo_bpm": back.tempo_bpm, "tag": back.tag}, f)
`;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr === null || typeof addr === "string") {
        srv.close();
        reject(new Error("no port assigned"));
        return;
      }
      const port = addr.port;
      srv.close(() => resolve(port));
    });
    srv.on("error", reject);
  });
}

function run(cmd: string, args: string[]): Promise<void> {
  return new Promise((resolve, reject) => {
    const proc = spawn(cmd, args, { stdio: ["ignore", "inherit", "inherit"] });
    proc.on("exit", (code) => {
      if (code === 0) resolve();
      else reject(new Error(`${cmd} exited with ${code}`));
    });
    proc.on("error", reject);
  });
}

async function waitHealthy(base: string, timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError = "";
  while (Date.now() < deadline) {
    try {
      const res = await fetch(`${base}/health`);
      if (res.ok) return;
      lastError = `HTTP ${res.status}`;
    } catch (e) {
      lastError = String(e);
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`service did not come up: ${lastError}`);
}

export default async function setup(): Promise<() => void> {
  workDir = mkdtempSync(join(tmpdir(), "loopdiff-ui-"));
  const ckpt = join(workDir, "contract.ckpt");
  const loopPath = join(workDir, "loop.json");
  const script = join(workDir, "setup.py");
  writeFileSync(script, SETUP_PY);
  await run("python3", [script, ckpt, loopPath]);

  const port = await freePort();
  const base = `http://127.0.0.1:${port}`;
  child = spawn("python3", [
    "-m", "loopdiff.cli", "serve",
    "--checkpoint", ckpt, "--host", "127.0.0.1", "--port", String(port),
  ], { stdio: ["ignore", "inherit", "inherit"] });
  child.on("exit", (code) => {
    if (code !== null && code !== 0) {
      console.error(`contract service exited early with ${code}`);
    }
  });
  await waitHealthy(base, 120_000);
  writeFileSync(INFO_PATH, JSON.stringify({ base, loopPath, ckpt }));

  return () => {
    child?.kill("SIGTERM");
    child = null;
    rmSync(INFO_PATH, { force: true });
    rmSync(workDir, { recursive: true, force: true });
  };
}
