// Typed client for the annotation service HTTP API, with an offline queue:
// submissions that fail on a network error are stored and flushed later, so
// a dropped connection never loses a rater's work.

export interface ScaleOption {
    value: number;
    label: string;
    rubric: string;
}

export interface TaskItem {
    fact: string;
    text: string;
    sources?: string[];
    tr?: number | null;
    needs_judgement?: boolean;
}

export interface QuestionInfo {
    id: string;
    stem: string;
    answer: string;
}

export interface TaskPayload {
    task: string;
    kind: "relevance" | "completeness";
    rater: string;
    question: QuestionInfo;
    model?: string;
    scale?: ScaleOption[];
    items: TaskItem[];
}

export interface Progress {
    tasks: number;
    relevance_tasks: number;
    completeness_tasks: number;
    submissions: number;
    completed_tasks: number;
    coverage: number;
    by_rater: Record<string, number>;
}

export interface AgreementEntry {
    rater_a?: string;
    rater_b?: string;
    n: number;
    kappa: number | null;
    percent_agreement: number;
    within_one: number;
}

export interface MetricTriple {
    relevance: number;
    comp_b: number;
    f1_b: number;
}

export interface ModelDelta {
    model: string;
    questions_judged: number;
    automatic: MetricTriple;
    manual: MetricTriple;
    delta: MetricTriple;
}

export interface Stats {
    progress: Progress;
    agreement?: { pairs: AgreementEntry[]; pooled: AgreementEntry };
    models?: ModelDelta[];
}

export type SubmitPayload =
    | { ratings: Record<string, number> }
    | { complete: 0 | 1; fact_relevance: Record<string, number> };

export interface QueuedSubmission {
    task: string;
    payload: SubmitPayload;
}

export class ApiError extends Error {
    constructor(
        readonly status: number,
        detail: string,
    ) {
        super(detail);
    }
}

/** Minimal storage contract so tests can inject a plain map. */
export interface KeyValueStore {
    getItem(key: string): string | null;
    setItem(key: string, value: string): void;
    removeItem(key: string): void;
}

const QUEUE_KEY = "explbench.pending";

export class ApiClient {
    constructor(
        private readonly base: string,
        readonly rater: string,
        private readonly token: string,
        private readonly store: KeyValueStore | null = null,
        private readonly fetchFn: typeof fetch = fetch,
    ) {}

    private async request(path: string, init?: RequestInit): Promise<unknown> {
        const url = `${this.base}${path}${path.includes("?") ? "&" : "?"}rater=${encodeURIComponent(this.rater)}`;
        const response = await this.fetchFn(url, {
            ...init,
            headers: {
                "X-Rater-Token": this.token,
                "Content-Type": "application/json",
                ...(init?.headers ?? {}),
            },
        });
        if (!response.ok) {
            let detail = response.statusText;
            try {
                const body = (await response.json()) as { detail?: string };
                if (body.detail) detail = body.detail;
            } catch {
                // keep the status text
            }
            throw new ApiError(response.status, detail);
        }
        return response.json();
    }

    async fetchTask(): Promise<TaskPayload | null> {
        const data = (await this.request("/api/task")) as TaskPayload | { task: null };
        return data.task === null ? null : (data as TaskPayload);
    }

    async stats(): Promise<Stats> {
        const response = await this.fetchFn(`${this.base}/api/stats`);
        if (!response.ok) throw new ApiError(response.status, response.statusText);
        return (await response.json()) as Stats;
    }

    async exportRatings(): Promise<string> {
        const response = await this.fetchFn(`${this.base}/api/export/ratings`);
        if (!response.ok) throw new ApiError(response.status, response.statusText);
        return response.text();
    }

    /**
     * Submit a judgement.  Validation failures (4xx) propagate to the caller;
     * network failures queue the submission for {@link flushQueue} and
     * resolve as {queued: true} so the screen can move on without data loss.
     */
    async submit(task: string, payload: SubmitPayload): Promise<{ queued: boolean }> {
        try {
            await this.request("/api/submit", {
                method: "POST",
                body: JSON.stringify({ task, payload }),
            });
            return { queued: false };
        } catch (error) {
            if (error instanceof ApiError) throw error;
            this.enqueue({ task, payload });
            return { queued: true };
        }
    }

    pendingSubmissions(): QueuedSubmission[] {
        if (!this.store) return [];
        const raw = this.store.getItem(QUEUE_KEY);
        return raw ? (JSON.parse(raw) as QueuedSubmission[]) : [];
    }

    private enqueue(entry: QueuedSubmission): void {
        if (!this.store) throw new Error("offline and no local queue available");
        const queue = this.pendingSubmissions();
        queue.push(entry);
        this.store.setItem(QUEUE_KEY, JSON.stringify(queue));
    }

    /**
     * Replay queued submissions in order.  Stops at the first network
     * failure (entries stay queued); drops entries the server rejects as
     * invalid, since they can never succeed.  Returns the number delivered.
     */
    async flushQueue(): Promise<number> {
        if (!this.store) return 0;
        let delivered = 0;
        let queue = this.pendingSubmissions();
        while (queue.length > 0) {
            const entry = queue[0];
            try {
                await this.request("/api/submit", {
                    method: "POST",
                    body: JSON.stringify(entry),
                });
                delivered += 1;
            } catch (error) {
                if (!(error instanceof ApiError)) break; // still offline
                // rejected by the server: drop it and continue
            }
            queue = queue.slice(1);
            this.store.setItem(QUEUE_KEY, JSON.stringify(queue));
        }
        return delivered;
    }
}
