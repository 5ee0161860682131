import { describe, expect, it } from "vitest";

import type { TaskPayload } from "../src/api";
import { TaskView } from "../src/state";

const SCALE = [
    { value: 3, label: "Core", rubric: "central knowledge" },
    { value: 2, label: "Important", rubric: "supporting knowledge" },
    { value: 1, label: "Extra Detail", rubric: "optional detail" },
    { value: 0, label: "Irrelevant", rubric: "does not belong" },
];

function relevanceTask(n: number): TaskPayload {
    return {
        task: "rel:Q1",
        kind: "relevance",
        rater: "alice",
        question: { id: "Q1", stem: "why?", answer: "because" },
        scale: SCALE,
        items: Array.from({ length: n }, (_, i) => ({ fact: `f${i}`, text: `fact ${i}` })),
    };
}

function completenessTask(): TaskPayload {
    return {
        task: "comp:m:Q1",
        kind: "completeness",
        rater: "alice",
        question: { id: "Q1", stem: "why?", answer: "because" },
        model: "m",
        items: [
            { fact: "a", text: "rated fact", tr: 2, needs_judgement: false },
            { fact: "b", text: "unrated one", tr: null, needs_judgement: true },
            { fact: "c", text: "unrated two", tr: null, needs_judgement: true },
        ],
    };
}

describe("relevance TaskView", () => {
    it("submit unlocks only when every item is rated", () => {
        const view = new TaskView(relevanceTask(3));
        expect(view.canSubmit).toBe(false);
        view.select("f0", 3);
        view.select("f1", 0);
        expect(view.canSubmit).toBe(false);
        view.select("f2", 2);
        expect(view.canSubmit).toBe(true);
        expect(view.buildPayload()).toEqual({ ratings: { f0: 3, f1: 0, f2: 2 } });
    });

    it("rejects values outside the task scale", () => {
        const view = new TaskView(relevanceTask(1));
        expect(() => view.select("f0", 5)).toThrow(/not legal/);
    });

    it("tracks dirty state and reselection", () => {
        const view = new TaskView(relevanceTask(1));
        expect(view.dirty).toBe(false);
        view.select("f0", 1);
        expect(view.dirty).toBe(true);
        view.select("f0", 2);
        expect(view.selection("f0")).toBe(2);
    });

    it("refuses to build a payload early", () => {
        const view = new TaskView(relevanceTask(2));
        view.select("f0", 1);
        expect(() => view.buildPayload()).toThrow(/selection/);
    });
});

describe("completeness TaskView", () => {
    it("requires the binary verdict plus every unrated fact", () => {
        const view = new TaskView(completenessTask());
        expect(view.requiredFacts()).toEqual(["b", "c"]);
        view.select("b", 1);
        view.select("c", 0);
        expect(view.canSubmit).toBe(false);
        view.setComplete(1);
        expect(view.canSubmit).toBe(true);
        expect(view.buildPayload()).toEqual({ complete: 1, fact_relevance: { b: 1, c: 0 } });
    });

    it("only binary values are legal, and only on unrated facts", () => {
        const view = new TaskView(completenessTask());
        expect(() => view.select("b", 2)).toThrow(/not legal/);
        expect(() => view.select("a", 1)).toThrow(/not legal/);
    });

    it("complete flag is rejected on relevance tasks", () => {
        const view = new TaskView(relevanceTask(1));
        expect(() => view.setComplete(1)).toThrow(/completeness/);
    });
});
