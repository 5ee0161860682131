// App bootstrap: rater sign-in from query params or the login form, tab
// navigation between the task screen and the dashboard, offline flushes on
// reconnect, and a retry banner that never discards screen state.

import { ApiClient, ApiError, type TaskPayload } from "./api";
import { TaskView } from "./state";
import { activeFact, moveActive, renderDashboard, renderNoTask, renderTask } from "./views";

const app = document.getElementById("app")!;
const banner = document.getElementById("banner")!;
const tabs = document.getElementById("tabs")!;

let client: ApiClient | null = null;
let view: TaskView | null = null;
let screen: "task" | "dashboard" = "task";

function showBanner(message: string, retry: () => void): void {
    banner.replaceChildren();
    banner.appendChild(Object.assign(document.createElement("span"), { textContent: message }));
    const button = document.createElement("button");
    button.textContent = "Retry";
    button.addEventListener("click", () => {
        banner.replaceChildren();
        retry();
    });
    banner.appendChild(button);
    banner.classList.add("visible");
}

function clearBanner(): void {
    banner.replaceChildren();
    banner.classList.remove("visible");
}

const handlers = {
    onSelect(fact: string, value: number): void {
        view!.select(fact, value);
        renderTask(app, view!, handlers);
    },
    onComplete(value: 0 | 1): void {
        view!.setComplete(value);
        renderTask(app, view!, handlers);
    },
    async onSubmit(): Promise<void> {
        if (!view!.canSubmit) return;
        try {
            const result = await client!.submit(view!.task.task, view!.buildPayload());
            if (result.queued) {
                showBanner("Offline: submission queued locally, will flush on reconnect.", loadTask);
            }
            view = null;
            await loadTask();
        } catch (error) {
            if (error instanceof ApiError) {
                showBanner(`Rejected by server: ${error.message}`, () => renderTask(app, view!, handlers));
            } else {
                showBanner("Network failure; your selections are kept.", () =>
                    renderTask(app, view!, handlers),
                );
            }
        }
    },
};

async function loadTask(): Promise<void> {
    screen = "task";
    try {
        const task: TaskPayload | null = await client!.fetchTask();
        clearBanner();
        if (task === null) {
            renderNoTask(app);
            return;
        }
        view = new TaskView(task);
        renderTask(app, view, handlers);
    } catch {
        showBanner("Could not reach the server.", loadTask);
    }
}

async function loadDashboard(): Promise<void> {
    screen = "dashboard";
    try {
        const stats = await client!.stats();
        clearBanner();
        renderDashboard(app, stats);
    } catch {
        showBanner("Could not load statistics.", loadDashboard);
    }
}

function keyboard(event: KeyboardEvent): void {
    if (screen !== "task" || !view) return;
    if (event.key === "ArrowDown") {
        moveActive(app, 1);
        event.preventDefault();
    } else if (event.key === "ArrowUp") {
        moveActive(app, -1);
        event.preventDefault();
    } else if (["0", "1", "2", "3"].includes(event.key)) {
        const fact = activeFact(app);
        if (fact === null) return;
        const value = Number(event.key);
        try {
            view.select(fact, value);
        } catch {
            return; // value not legal for this item (e.g. binary toggle)
        }
        renderTask(app, view, handlers);
        event.preventDefault();
    } else if (event.key === "Enter" && view.canSubmit) {
        void handlers.onSubmit();
    }
}

function start(rater: string, token: string): void {
    client = new ApiClient("", rater, token, window.localStorage);
    document.getElementById("login")?.remove();
    tabs.classList.add("visible");
    document.getElementById("tab-tasks")!.addEventListener("click", () => void loadTask());
    document.getElementById("tab-dashboard")!.addEventListener("click", () => void loadDashboard());
    document.addEventListener("keydown", keyboard);
    window.addEventListener("online", () => {
        void client!.flushQueue().then((count) => {
            if (count > 0) clearBanner();
        });
    });
    void client.flushQueue();
    void loadTask();
}

function boot(): void {
    const params = new URLSearchParams(window.location.search);
    const rater = params.get("rater");
    const token = params.get("token");
    if (rater && token) {
        start(rater, token);
        return;
    }
    const form = document.getElementById("login-form") as HTMLFormElement;
    form.addEventListener("submit", (event) => {
        event.preventDefault();
        const data = new FormData(form);
        start(String(data.get("rater") ?? ""), String(data.get("token") ?? ""));
    });
}

boot();
