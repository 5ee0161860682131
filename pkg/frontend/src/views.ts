// DOM renderers for the two task screens and the dashboard.  No framework:
// each render replaces the container's children from the current state.

import type { ModelDelta, Stats, TaskPayload } from "./api";
import { fmt, pct, signed } from "./format";
import type { TaskView } from "./state";

export interface TaskHandlers {
    onSelect(fact: string, value: number): void;
    onComplete(value: 0 | 1): void;
    onSubmit(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
}

function questionHeader(task: TaskPayload): HTMLElement {
    const header = el("header", "question");
    header.appendChild(el("p", "stem", task.question.stem));
    header.appendChild(el("p", "answer", `Answer: ${task.question.answer}`));
    if (task.model) header.appendChild(el("p", "model", `Model: ${task.model}`));
    return header;
}

function renderRelevance(root: HTMLElement, view: TaskView, handlers: TaskHandlers): void {
    const task = view.task;
    const scale = task.scale ?? [];

    const legend = el("ul", "rubric");
    for (const option of scale) {
        const entry = el("li");
        entry.appendChild(el("strong", undefined, `${option.value} ${option.label}: `));
        entry.appendChild(el("span", undefined, option.rubric));
        legend.appendChild(entry);
    }
    root.appendChild(legend);

    const list = el("ol", "items");
    task.items.forEach((item, index) => {
        const row = el("li", "item");
        row.dataset.fact = item.fact;
        row.tabIndex = 0;
        if (index === 0) row.classList.add("active");
        const label = el("span", "fact-text", item.text);
        label.title = (item.sources ?? []).join(", ");
        row.appendChild(label);
        const buttons = el("span", "buttons");
        for (const option of scale) {
            const button = el("button", "rating", String(option.value));
            button.type = "button";
            button.title = `${option.label}: ${option.rubric}`;
            button.setAttribute(
                "aria-pressed",
                view.selection(item.fact) === option.value ? "true" : "false",
            );
            button.addEventListener("click", () => handlers.onSelect(item.fact, option.value));
            buttons.appendChild(button);
        }
        row.appendChild(buttons);
        list.appendChild(row);
    });
    root.appendChild(list);
}

function renderCompleteness(root: HTMLElement, view: TaskView, handlers: TaskHandlers): void {
    const task = view.task;
    const list = el("ol", "items");
    for (const item of task.items) {
        const row = el("li", "item");
        row.dataset.fact = item.fact;
        row.appendChild(el("span", "fact-text", item.text));
        if (item.needs_judgement) {
            const toggles = el("span", "buttons relevance-toggle");
            for (const [value, label] of [
                [1, "relevant"],
                [0, "irrelevant"],
            ] as const) {
                const button = el("button", "toggle", label);
                button.type = "button";
                button.setAttribute(
                    "aria-pressed",
                    view.selection(item.fact) === value ? "true" : "false",
                );
                button.addEventListener("click", () => handlers.onSelect(item.fact, value));
                toggles.appendChild(button);
            }
            row.appendChild(toggles);
        } else {
            row.appendChild(el("span", "grade", item.tr === null ? "" : `rated ${item.tr}`));
        }
        list.appendChild(row);
    }
    root.appendChild(list);

    const verdict = el("div", "verdict");
    verdict.appendChild(el("span", undefined, "Does this explanation form a complete chain of reasoning? "));
    for (const [value, label] of [
        [1, "complete"],
        [0, "incomplete"],
    ] as const) {
        const button = el("button", "toggle verdict-toggle", label);
        button.type = "button";
        button.setAttribute("aria-pressed", view.completeValue === value ? "true" : "false");
        button.addEventListener("click", () => handlers.onComplete(value));
        verdict.appendChild(button);
    }
    root.appendChild(verdict);
}

/** Move the active row marker; used by the arrow-key navigation. */
export function moveActive(root: HTMLElement, delta: number): void {
    const rows = Array.from(root.querySelectorAll<HTMLElement>("li.item"));
    if (rows.length === 0) return;
    const current = rows.findIndex((row) => row.classList.contains("active"));
    const next =
        current < 0 ? 0 : Math.min(rows.length - 1, Math.max(0, current + delta));
    rows.forEach((row, index) => row.classList.toggle("active", index === next));
    rows[next].focus?.();
}

export function activeFact(root: HTMLElement): string | null {
    const row = root.querySelector<HTMLElement>("li.item.active");
    return row?.dataset.fact ?? null;
}

export function renderTask(root: HTMLElement, view: TaskView, handlers: TaskHandlers): void {
    const previousActive = activeFact(root);
    root.replaceChildren();
    const task = view.task;
    root.appendChild(questionHeader(task));
    if (task.kind === "relevance") {
        renderRelevance(root, view, handlers);
    } else {
        renderCompleteness(root, view, handlers);
    }
    if (previousActive) {
        const rows = root.querySelectorAll<HTMLElement>("li.item");
        rows.forEach((row) =>
            row.classList.toggle("active", row.dataset.fact === previousActive),
        );
    }

    const submit = el("button", "submit", "Submit");
    submit.type = "button";
    submit.disabled = !view.canSubmit;
    submit.addEventListener("click", () => handlers.onSubmit());
    root.appendChild(submit);
}

export function renderNoTask(root: HTMLElement): void {
    root.replaceChildren();
    root.appendChild(el("p", "done", "No tasks left for you. Thank you!"));
}

function progressBar(label: string, done: number, total: number): HTMLElement {
    const wrap = el("div", "progress-row");
    wrap.appendChild(el("span", "progress-label", `${label} ${done}/${total}`));
    const bar = el("div", "bar");
    const fill = el("div", "fill");
    fill.style.width = total > 0 ? `${Math.round((100 * done) / total)}%` : "0%";
    bar.appendChild(fill);
    wrap.appendChild(bar);
    return wrap;
}

function deltaTable(models: ModelDelta[]): HTMLElement {
    const table = el("table", "delta-table");
    const head = el("tr");
    for (const title of ["Model", "Questions", "Rel", "Comp_B", "F1_B", "Rel", "Comp_B", "F1_B", "Rel", "Comp_B", "F1_B"]) {
        head.appendChild(el("th", undefined, title));
    }
    const group = el("tr");
    for (const [span, title] of [
        [2, ""],
        [3, "Automatic"],
        [3, "Manual"],
        [3, "Delta"],
    ] as const) {
        const cell = el("th", "group", title);
        cell.colSpan = span;
        group.appendChild(cell);
    }
    table.appendChild(group);
    table.appendChild(head);
    for (const model of models) {
        const row = el("tr");
        row.appendChild(el("td", undefined, model.model));
        row.appendChild(el("td", undefined, String(model.questions_judged)));
        for (const metrics of [model.automatic, model.manual]) {
            row.appendChild(el("td", undefined, fmt(metrics.relevance)));
            row.appendChild(el("td", undefined, fmt(metrics.comp_b)));
            row.appendChild(el("td", undefined, fmt(metrics.f1_b)));
        }
        row.appendChild(el("td", "delta", signed(model.delta.relevance)));
        row.appendChild(el("td", "delta", signed(model.delta.comp_b)));
        row.appendChild(el("td", "delta", signed(model.delta.f1_b)));
        table.appendChild(row);
    }
    return table;
}

export function renderDashboard(root: HTMLElement, stats: Stats): void {
    root.replaceChildren();
    const progress = stats.progress;

    const section = el("section", "progress");
    section.appendChild(el("h2", undefined, "Progress"));
    section.appendChild(progressBar("tasks at coverage", progress.completed_tasks, progress.tasks));
    section.appendChild(
        progressBar(
            "submissions",
            progress.submissions,
            progress.tasks * progress.coverage,
        ),
    );
    const raters = el("p", "raters");
    raters.textContent = Object.entries(progress.by_rater)
        .map(([name, count]) => `${name}: ${count}`)
        .join("  ");
    section.appendChild(raters);
    root.appendChild(section);

    if (stats.agreement) {
        const card = el("section", "agreement-card");
        card.appendChild(el("h2", undefined, "Agreement"));
        const table = el("table");
        const head = el("tr");
        for (const title of ["Raters", "Items", "Kappa", "% agree", "Within +-1"]) {
            head.appendChild(el("th", undefined, title));
        }
        table.appendChild(head);
        const rows = [...stats.agreement.pairs, { ...stats.agreement.pooled, rater_a: "pooled", rater_b: "" }];
        for (const pair of rows) {
            const row = el("tr");
            row.appendChild(
                el("td", undefined, pair.rater_b ? `${pair.rater_a} vs ${pair.rater_b}` : pair.rater_a ?? ""),
            );
            row.appendChild(el("td", undefined, String(pair.n)));
            row.appendChild(el("td", "kappa", fmt(pair.kappa)));
            row.appendChild(el("td", undefined, pct(pair.percent_agreement)));
            row.appendChild(el("td", undefined, pct(pair.within_one)));
            table.appendChild(row);
        }
        card.appendChild(table);
        root.appendChild(card);
    }

    if (stats.models && stats.models.length > 0) {
        const section2 = el("section", "deltas");
        section2.appendChild(el("h2", undefined, "Manual vs automatic"));
        section2.appendChild(deltaTable(stats.models));
        root.appendChild(section2);
    }
}
