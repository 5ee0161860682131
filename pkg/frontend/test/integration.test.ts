// @vitest-environment jsdom
//
// Scripted browser session against the real annotation service: build
// shortlists with the CLI, launch the HTTP server, rate a relevance task
// through the rendered screen for two raters, and check that the dashboard
// agreement card and the ratings export reflect the submissions immediately.
// Finally restart the server on the same event log and require identical
// statistics (replay determinism).

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, type Stats, type TaskPayload } from "../src/api";
import { TaskView } from "../src/state";
import { renderDashboard, renderTask } from "../src/views";

const REPO_ROOT = resolve(__dirname, "..", "..");
const PYTHON = process.env.PYTHON ?? "python3";
const PORT = 8800 + (process.pid % 150);
const BASE = `http://127.0.0.1:${PORT}`;

let workDir: string;
let server: ChildProcess | null = null;

function writeServeConfig(stateDir: string): string {
    const conf = join(workDir, "serve.conf");
    writeFileSync(
        conf,
        [
            `kb_dir = ${join(REPO_ROOT, "fixtures", "kb")}`,
            `questions = ${join(REPO_ROOT, "fixtures", "questions.jsonl")}`,
            `shortlists = ${join(workDir, "out", "shortlists.jsonl")}`,
            "raters = alice:tok-a,bob:tok-b",
            "coverage = 2",
            `state_dir = ${stateDir}`,
            "host = 127.0.0.1",
            `port = ${PORT}`,
        ].join("\n") + "\n",
    );
    return conf;
}

async function waitForServer(): Promise<void> {
    for (let attempt = 0; attempt < 100; attempt++) {
        try {
            const response = await fetch(`${BASE}/api/stats`);
            if (response.ok) return;
        } catch {
            // not up yet
        }
        await new Promise((r) => setTimeout(r, 200));
    }
    throw new Error("annotation service did not come up");
}

async function startServer(conf: string): Promise<ChildProcess> {
    const child = spawn(PYTHON, ["-m", "explbench.cli", "serve", "--config", conf], {
        cwd: REPO_ROOT,
        stdio: "ignore",
    });
    await waitForServer();
    return child;
}

async function stopServer(child: ChildProcess | null): Promise<void> {
    if (!child) return;
    child.kill("SIGTERM");
    await new Promise((r) => setTimeout(r, 500));
}

beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), "explbench-ui-"));
    const shortlist = spawnSync(
        PYTHON,
        [
            "-m",
            "explbench.cli",
            "shortlist",
            "--kb",
            join(REPO_ROOT, "fixtures", "kb"),
            "--questions",
            join(REPO_ROOT, "fixtures", "questions.jsonl"),
            "--scores",
            [
                join(REPO_ROOT, "fixtures", "scores", "ranker_a.tsv"),
                join(REPO_ROOT, "fixtures", "scores", "ranker_b.tsv"),
            ].join(","),
            "--out-dir",
            join(workDir, "out"),
        ],
        { cwd: REPO_ROOT, encoding: "utf-8" },
    );
    expect(shortlist.status, shortlist.stderr).toBe(0);
    server = await startServer(writeServeConfig(join(workDir, "state")));
}, 60_000);

afterAll(async () => {
    await stopServer(server);
});

function rateThroughScreen(task: TaskPayload, shift: number): TaskView {
    // Render the real screen and click the rating buttons like a rater would.
    document.body.innerHTML = "<main id='app'></main>";
    const root = document.getElementById("app")!;
    const view = new TaskView(task);
    const handlers = {
        onSelect: (fact: string, value: number) => {
            view.select(fact, value);
            renderTask(root, view, handlers);
        },
        onComplete: () => {},
        onSubmit: () => {},
    };
    renderTask(root, view, handlers);
    task.items.forEach((item, index) => {
        const row = Array.from(root.querySelectorAll<HTMLElement>("li.item")).find(
            (r) => r.dataset.fact === item.fact,
        )!;
        const value = (index + shift) % 4;
        const button = Array.from(row.querySelectorAll<HTMLButtonElement>("button.rating")).find(
            (b) => b.textContent === String(value),
        )!;
        button.click();
    });
    const submit = root.querySelector<HTMLButtonElement>("button.submit")!;
    expect(submit.disabled).toBe(false);
    return view;
}

describe("live annotation round trip", () => {
    let statsAfter: Stats;

    it("two raters fetch and submit the same relevance task through the UI", async () => {
        const alice = new ApiClient(BASE, "alice", "tok-a");
        const bob = new ApiClient(BASE, "bob", "tok-b");

        // Fetch for both raters up front: with nothing submitted yet, the
        // least-annotated routing serves the same first task to each.
        const aliceTask = (await alice.fetchTask())!;
        const bobTask = (await bob.fetchTask())!;
        expect(aliceTask.kind).toBe("relevance");
        expect(aliceTask.items.length).toBeGreaterThan(10);
        expect(bobTask.task).toBe(aliceTask.task); // coverage 2: served to both

        const aliceView = rateThroughScreen(aliceTask, 0);
        await alice.submit(aliceTask.task, aliceView.buildPayload());
        const bobView = rateThroughScreen(bobTask, 1); // disagree by one grade everywhere
        await bob.submit(bobTask.task, bobView.buildPayload());

        statsAfter = await alice.stats(); // one refresh after submitting
        expect(statsAfter.progress.submissions).toBe(2);
        expect(statsAfter.agreement).toBeDefined();
        const pair = statsAfter.agreement!.pairs[0];
        expect(pair.rater_a).toBe("alice");
        expect(pair.rater_b).toBe("bob");
        expect(pair.n).toBe(aliceTask.items.length);

        document.body.innerHTML = "<main id='dash'></main>";
        const dash = document.getElementById("dash")!;
        renderDashboard(dash, statsAfter);
        const card = dash.querySelector(".agreement-card")!;
        expect(card.textContent).toContain("alice vs bob");
        expect(card.textContent).toContain(`${pair.n}`);

        const exported = await alice.exportRatings();
        const lines = exported.trim().split("\n").map((line) => JSON.parse(line));
        expect(lines.length).toBe(2 * aliceTask.items.length);
        const byRater = new Map<string, number>();
        for (const line of lines) {
            byRater.set(line.rater, (byRater.get(line.rater) ?? 0) + 1);
        }
        expect(byRater.get("alice")).toBe(aliceTask.items.length);
        expect(byRater.get("bob")).toBe(aliceTask.items.length);

        // a submitted task never reappears for the same rater
        const next = await alice.fetchTask();
        expect(next === null || next.task !== aliceTask.task).toBe(true);
    });

    it("replaying the event log from empty reproduces identical stats", async () => {
        await stopServer(server);
        server = await startServer(writeServeConfig(join(workDir, "state")));
        const replayed = await new ApiClient(BASE, "alice", "tok-a").stats();
        expect(replayed).toEqual(statsAfter);
    });
});
