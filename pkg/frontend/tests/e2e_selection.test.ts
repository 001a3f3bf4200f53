/**
 * End-to-end selection loop against the real service (acceptance
 * criterion: posted picks flow through the run and land in the results row
 * verbatim). Spawns `movelab serve` on a scratch workspace; requires the
 * Python package to be installed.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, readdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { addAnalysisWindow, createSelection, snapPick, stageBwWindow, addPick, submit } from "../src/selection.js";

const PORT = 18000 + Math.floor(Math.random() * 10_000);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let workspace = "";

function writeForceTrial(dir: string): void {
  const rate = 1000;
  const bw = 700.0;
  const rows: string[] = ["time,fz"];
  const push = (t: number, v: number) => rows.push(`${t.toFixed(6)},${v.toFixed(6)}`);
  let k = 0;
  for (let i = 0; i < 0.5 * rate; i++) push(k++ / rate, bw); // quiet standing
  for (let i = 0; i < 0.25 * rate; i++) push(k++ / rate, 0);
  const T = 0.5;
  for (let i = 0; i <= T * rate; i++) {
    push(k++ / rate, 2 * bw * Math.sin((Math.PI * i) / (T * rate)));
  }
  for (let i = 0; i < 0.25 * rate; i++) push(k++ / rate, 0);
  writeFileSync(join(dir, "trial.csv"), rows.join("\n") + "\n");
}

async function waitForServer(api: ApiClient, timeoutMs = 20_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      await api.listFiles();
      return;
    } catch {
      if (Date.now() > deadline) throw new Error("service did not come up");
      await new Promise((resolve) => setTimeout(resolve, 200));
    }
  }
}

beforeAll(async () => {
  workspace = mkdtempSync(join(tmpdir(), "movelab-e2e-"));
  writeForceTrial(workspace);
  server = spawn(
    "python3",
    ["-m", "movelab.cli", "serve", "--workspace", workspace, "--port", String(PORT)],
    { stdio: "ignore" },
  );
  await waitForServer(new ApiClient(BASE));
}, 30_000);

afterAll(() => {
  server?.kill();
});

describe("end-to-end selection loop", () => {
  it("posted BW window and peak picks drive the forcecube row verbatim", async () => {
    const api = new ApiClient(BASE);

    const files = await api.listFiles();
    const trial = files.find((f) => f.path === "trial.csv");
    expect(trial).toBeDefined();
    expect(trial!.type).toBe("force");

    const series = await api.getSeries("trial.csv", "fz");
    expect(series.rate_hz).toBeCloseTo(1000, 6);
    const state = createSelection(series);

    stageBwWindow(state, 0.0, 0.5);
    addAnalysisWindow(state, 0.6, 1.45);
    // snap near the apex of the pulse (t ~ 1.0 s): the snapped pick carries
    // the true sample index of the extremum
    const apex = snapPick(state, 1.0, 0.05);
    expect(series.decimated).toBe(false); // 1500 samples fit under max_points
    expect(apex.index).toBe(1000);
    addPick(state, { index: 900, t: 0.9, v: series.v[series.idx.indexOf(900)]! });
    addPick(state, { index: 950, t: 0.95, v: series.v[series.idx.indexOf(950)]! });
    addPick(state, apex); // sorted picks map to (transient, impact peak, max)

    const { runId } = await submit(state, api, { runForcecube: true });
    expect(runId).not.toBeNull();
    const status = await api.waitForRun(runId!);
    expect(status.status).toBe("done");

    const outputs = status.manifest!.outputs;
    const resultsPath = outputs.find((p) => p.endsWith("forcecube_results.csv"));
    expect(resultsPath).toBeDefined();
    const text = readFileSync(resultsPath!, "utf-8");
    const [headerLine, rowLine] = text.trim().split("\n");
    const header = headerLine!.split(",");
    const row = rowLine!.split(",");
    const get = (col: string) => row[header.indexOf(col)];

    const picked = state.picks.map((p) => p.index).sort((a, b) => a - b);
    expect(Number(get("Index_ITransient"))).toBe(picked[0]);
    expect(Number(get("Index_VIP"))).toBe(picked[1]);
    expect(Number(get("Index_Max"))).toBe(picked[2]);
    expect(get("FileName")).toBe("trial.csv");
    // the apex pick is the true maximum of the half-sine: 2 BW
    expect(Number(get("Peak_VMax_BW"))).toBeCloseTo(2.0, 2);
  }, 60_000);

  it("selections persist for re-reading by the UI", async () => {
    const stored = JSON.parse(
      readFileSync(join(workspace, "selections.json"), "utf-8"),
    ) as Record<string, { bw_window: [number, number]; picked_peaks: number[] }>;
    expect(stored["trial.csv"]!.bw_window).toEqual([0.0, 0.5]);
    expect(stored["trial.csv"]!.picked_peaks).toHaveLength(3);
    const runsDir = readdirSync(join(workspace, "runs"));
    expect(runsDir.length).toBeGreaterThan(0);
  });
});
