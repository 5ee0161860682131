// Client-side task state: which rating each item has, whether the screen is
// dirty, and whether every required selection is in place.  The server stays
// the source of truth; this only tracks what the rater has clicked so far.

import type { SubmitPayload, TaskPayload } from "./api";

export class TaskView {
    private readonly selections = new Map<string, number>();
    private complete: 0 | 1 | null = null;
    dirty = false;

    constructor(readonly task: TaskPayload) {}

    private legalValues(fact: string): number[] {
        if (this.task.kind === "relevance") {
            return (this.task.scale ?? []).map((option) => option.value);
        }
        const item = this.task.items.find((i) => i.fact === fact);
        return item?.needs_judgement ? [0, 1] : [];
    }

    /** Facts that must carry a selection before submit unlocks. */
    requiredFacts(): string[] {
        if (this.task.kind === "relevance") {
            return this.task.items.map((item) => item.fact);
        }
        return this.task.items.filter((item) => item.needs_judgement).map((item) => item.fact);
    }

    select(fact: string, value: number): void {
        const legal = this.legalValues(fact);
        if (!legal.includes(value)) {
            throw new Error(`value ${value} is not legal for ${fact} on a ${this.task.kind} task`);
        }
        this.selections.set(fact, value);
        this.dirty = true;
    }

    selection(fact: string): number | undefined {
        return this.selections.get(fact);
    }

    setComplete(value: 0 | 1): void {
        if (this.task.kind !== "completeness") {
            throw new Error("complete/incomplete applies only to completeness tasks");
        }
        this.complete = value;
        this.dirty = true;
    }

    get completeValue(): 0 | 1 | null {
        return this.complete;
    }

    get canSubmit(): boolean {
        const required = this.requiredFacts();
        if (!required.every((fact) => this.selections.has(fact))) return false;
        if (this.task.kind === "completeness" && this.complete === null) return false;
        return true;
    }

    buildPayload(): SubmitPayload {
        if (!this.canSubmit) {
            throw new Error("not every item has a selection yet");
        }
        if (this.task.kind === "relevance") {
            const ratings: Record<string, number> = {};
            for (const item of this.task.items) {
                ratings[item.fact] = this.selections.get(item.fact)!;
            }
            return { ratings };
        }
        const factRelevance: Record<string, number> = {};
        for (const fact of this.requiredFacts()) {
            factRelevance[fact] = this.selections.get(fact)!;
        }
        return { complete: this.complete!, fact_relevance: factRelevance };
    }
}
