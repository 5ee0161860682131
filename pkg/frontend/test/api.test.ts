import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, type KeyValueStore } from "../src/api";

class MemoryStore implements KeyValueStore {
    private readonly map = new Map<string, string>();
    getItem(key: string): string | null {
        return this.map.get(key) ?? null;
    }
    setItem(key: string, value: string): void {
        this.map.set(key, value);
    }
    removeItem(key: string): void {
        this.map.delete(key);
    }
}

function okResponse(body: unknown): Response {
    return new Response(JSON.stringify(body), { status: 200 });
}

describe("offline queue", () => {
    it("queues on network failure and flushes in order once online", async () => {
        const store = new MemoryStore();
        const delivered: string[] = [];
        let online = false;
        const fetchFn = (async (url: RequestInfo | URL, init?: RequestInit) => {
            if (!online) throw new TypeError("fetch failed");
            delivered.push(String(init?.body));
            return okResponse({ ok: true, seq: delivered.length });
        }) as typeof fetch;

        const client = new ApiClient("http://x", "alice", "tok", store, fetchFn);
        expect(await client.submit("t1", { ratings: { f: 1 } })).toEqual({ queued: true });
        expect(await client.submit("t2", { ratings: { f: 2 } })).toEqual({ queued: true });
        expect(client.pendingSubmissions().map((q) => q.task)).toEqual(["t1", "t2"]);

        expect(await client.flushQueue()).toBe(0); // still offline, nothing lost
        expect(client.pendingSubmissions().length).toBe(2);

        online = true;
        expect(await client.flushQueue()).toBe(2);
        expect(client.pendingSubmissions()).toEqual([]);
        expect(delivered[0]).toContain("t1");
        expect(delivered[1]).toContain("t2");
    });

    it("does not queue server-side validation failures", async () => {
        const store = new MemoryStore();
        const fetchFn = (async () =>
            new Response(JSON.stringify({ detail: "rating out of range" }), {
                status: 422,
            })) as typeof fetch;
        const client = new ApiClient("http://x", "alice", "tok", store, fetchFn);
        await expect(client.submit("t1", { ratings: { f: 9 } })).rejects.toThrow(ApiError);
        expect(client.pendingSubmissions()).toEqual([]);
    });

    it("drops queued entries the server rejects during a flush", async () => {
        const store = new MemoryStore();
        let online = false;
        let calls = 0;
        const fetchFn = (async () => {
            if (!online) throw new TypeError("fetch failed");
            calls += 1;
            return calls === 1
                ? new Response(JSON.stringify({ detail: "unknown task" }), { status: 404 })
                : okResponse({ ok: true, seq: calls });
        }) as typeof fetch;
        const client = new ApiClient("http://x", "alice", "tok", store, fetchFn);
        await client.submit("gone", { ratings: {} });
        await client.submit("good", { ratings: {} });
        online = true;
        expect(await client.flushQueue()).toBe(1);
        expect(client.pendingSubmissions()).toEqual([]);
    });
});

describe("task fetching", () => {
    it("maps the no-task sentinel to null", async () => {
        const fetchFn = (async () => okResponse({ task: null })) as typeof fetch;
        const client = new ApiClient("http://x", "alice", "tok", null, fetchFn);
        expect(await client.fetchTask()).toBeNull();
    });

    it("propagates auth failures with the server detail", async () => {
        const fetchFn = (async () =>
            new Response(JSON.stringify({ detail: "bad or missing rater token" }), {
                status: 403,
            })) as typeof fetch;
        const client = new ApiClient("http://x", "alice", "tok", null, fetchFn);
        await expect(client.fetchTask()).rejects.toThrow(/token/);
    });
});
