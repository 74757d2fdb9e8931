import { createServer, type Server, type ServerResponse } from "node:http";
import { afterEach, describe, expect, it } from "vitest";

import {
  ApiError,
  fetchNextTask,
  fetchStatus,
  makeClient,
  postVerdict,
} from "../src/api.js";
import {
  boxFromTuple,
  clampToRegion,
  fitRegion,
  normalizeDrag,
  toImage,
} from "../src/transform.js";
import { correctBox, correctClass, keepBox } from "../src/verdicts.js";
import type { TaskPayload } from "../src/types.js";

/** One request as the stub saw it, body bytes included. */
interface Recorded {
  method: string;
  url: string;
  sessionId: string | undefined;
  contentType: string | undefined;
  body: string;
}

interface Stub {
  baseUrl: string;
  requests: Recorded[];
  close(): Promise<void>;
}

type Route = (rec: Recorded, res: ServerResponse) => void;

function json(res: ServerResponse, status: number, doc: unknown): void {
  const payload = JSON.stringify(doc);
  res.writeHead(status, { "content-type": "application/json" });
  res.end(payload);
}

/** Minimal recording server standing in for the verification service. */
function startStub(route: Route): Promise<Stub> {
  const requests: Recorded[] = [];
  const server: Server = createServer((req, res) => {
    const chunks: Buffer[] = [];
    req.on("data", (c: Buffer) => chunks.push(c));
    req.on("end", () => {
      const rec: Recorded = {
        method: req.method ?? "",
        url: req.url ?? "",
        sessionId: req.headers["x-session-id"] as string | undefined,
        contentType: req.headers["content-type"] as string | undefined,
        body: Buffer.concat(chunks).toString("utf8"),
      };
      requests.push(rec);
      route(rec, res);
    });
  });
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const addr = server.address();
      if (addr === null || typeof addr === "string") {
        throw new Error("stub failed to bind");
      }
      resolve({
        baseUrl: `http://127.0.0.1:${addr.port}`,
        requests,
        close: () =>
          new Promise<void>((done, fail) => {
            server.closeAllConnections();
            server.close((err) => (err ? fail(err) : done()));
          }),
      });
    });
  });
}

function boxTask(overrides: Partial<TaskPayload> = {}): TaskPayload {
  return {
    task_id: "box-c0-000001",
    kind: "Box",
    image_id: "img-0003",
    annotation_id: "img-0003/det-07",
    region: [40, 8, 100, 50],
    pseudo_box: [60, 20, 30, 20],
    pseudo_class: 1,
    issued_cycle: 0,
    lease_expires_in_s: 300,
    crop_url: null,
    ...overrides,
  };
}

const stubs: Stub[] = [];

async function stubWithTask(task: TaskPayload): Promise<Stub> {
  const stub = await startStub((rec, res) => {
    if (rec.method === "GET" && rec.url === "/api/v1/tasks/next") {
      json(res, 200, task);
      return;
    }
    if (rec.method === "POST" && rec.url.endsWith("/verdict")) {
      json(res, 200, {
        applied: true,
        seq: 0,
        task_id: task.task_id,
        kind: task.kind,
        annotation_id: task.annotation_id,
        answer: JSON.parse(rec.body).answer,
        new_box: null,
        new_class: null,
      });
      return;
    }
    json(res, 404, { detail: "unexpected route" });
  });
  stubs.push(stub);
  return stub;
}

afterEach(async () => {
  while (stubs.length > 0) {
    await stubs.pop()!.close();
  }
});

describe("golden interaction: keep the box as-is", () => {
  it("sends exactly one verdict with the exact bytes", async () => {
    const stub = await stubWithTask(boxTask());
    const client = makeClient(stub.baseUrl, "itest-1");

    const result = await fetchNextTask(client);
    expect(result.kind).toBe("task");
    if (result.kind !== "task") {
      return;
    }
    const applied = await postVerdict(client, result.task.task_id, keepBox());
    expect(applied.applied).toBe(true);

    const posts = stub.requests.filter((r) => r.method === "POST");
    expect(posts).toHaveLength(1);
    expect(posts[0]!.url).toBe("/api/v1/tasks/box-c0-000001/verdict");
    expect(posts[0]!.body).toBe('{"answer":"BoxKeep"}');
    expect(posts[0]!.contentType).toBe("application/json");
    for (const r of stub.requests) {
      expect(r.sessionId).toBe("itest-1");
    }
  });
});

describe("golden interaction: draw a corrected box", () => {
  it("transforms the drag to image coordinates, clamps it, and posts once", async () => {
    const stub = await stubWithTask(boxTask());
    const client = makeClient(stub.baseUrl, "itest-2");

    const result = await fetchNextTask(client);
    expect(result.kind).toBe("task");
    if (result.kind !== "task") {
      return;
    }
    const region = boxFromTuple(result.task.region);
    const view = fitRegion(region, 300, 300);

    // backward drag on a 300x300 canvas that spills above the region top
    const canvasBox = normalizeDrag(150, 135, 30, 60);
    const clamped = clampToRegion(toImage(canvasBox, region, view), region);
    expect(clamped).toEqual({ x: 50, y: 8, w: 40, h: 20 });

    await postVerdict(client, result.task.task_id, correctBox(clamped!));

    const posts = stub.requests.filter((r) => r.method === "POST");
    expect(posts).toHaveLength(1);
    expect(posts[0]!.url).toBe("/api/v1/tasks/box-c0-000001/verdict");
    expect(posts[0]!.body).toBe(
      '{"answer":"BoxCorrect","new_box":[50,8,40,20]}',
    );
  });
});

describe("golden interaction: choose another class", () => {
  it("forwards the picked index verbatim and posts once", async () => {
    const task = boxTask({
      task_id: "cls-c0-000007",
      kind: "Class",
      pseudo_class: 1,
    });
    const stub = await stubWithTask(task);
    const client = makeClient(stub.baseUrl, "itest-3");

    const result = await fetchNextTask(client);
    expect(result.kind).toBe("task");
    if (result.kind !== "task") {
      return;
    }
    expect(result.task.pseudo_class).toBe(1);

    await postVerdict(client, result.task.task_id, correctClass(3));

    const posts = stub.requests.filter((r) => r.method === "POST");
    expect(posts).toHaveLength(1);
    expect(posts[0]!.url).toBe("/api/v1/tasks/cls-c0-000007/verdict");
    expect(posts[0]!.body).toBe('{"answer":"ClassCorrect","new_class":3}');
  });
});

describe("queue states", () => {
  it("distinguishes a drained queue from a busy one and a spent budget", async () => {
    let mode: "drained" | "waiting" | "budget" = "drained";
    const stub = await startStub((rec, res) => {
      if (mode === "budget") {
        json(res, 410, { detail: "annotation budget exhausted" });
      } else if (mode === "waiting") {
        json(res, 404, { detail: "no task available; others outstanding" });
      } else {
        json(res, 404, { detail: "all tasks complete" });
      }
    });
    stubs.push(stub);
    const client = makeClient(stub.baseUrl, "itest-4");

    expect((await fetchNextTask(client)).kind).toBe("drained");
    mode = "waiting";
    expect((await fetchNextTask(client)).kind).toBe("waiting");
    mode = "budget";
    expect((await fetchNextTask(client)).kind).toBe("budget");
  });

  it("raises a typed error with the server detail on a conflict", async () => {
    const stub = await startStub((rec, res) => {
      json(res, 409, { detail: "task box-c0-000001 is not outstanding" });
    });
    stubs.push(stub);
    const client = makeClient(stub.baseUrl, "itest-5");

    await expect(
      postVerdict(client, "box-c0-000001", keepBox()),
    ).rejects.toSatisfy((err: unknown) => {
      expect(err).toBeInstanceOf(ApiError);
      expect((err as ApiError).status).toBe(409);
      expect((err as ApiError).detail).toBe(
        "task box-c0-000001 is not outstanding",
      );
      return true;
    });
  });
});

describe("status endpoint", () => {
  it("parses the ledger and category list", async () => {
    const stub = await startStub((rec, res) => {
      json(res, 200, {
        phase: "Box",
        ledger: {
          budget_total_ms: 1000000,
          budget_loc_ms: 500000,
          budget_cls_ms: 500000,
          spent_loc_ms: 36600,
          spent_cls_ms: 0,
          entries: [["box-c0-000001", "VerifyBox", 1600]],
        },
        counts: { proposed: 10 },
        box_pass: {},
        class_pass: {},
        outstanding: 1,
        categories: [
          { index: 0, id: 1, name: "rivet" },
          { index: 1, id: 4, name: "bracket" },
        ],
        budget_remaining_ms: 963400,
      });
    });
    stubs.push(stub);
    const client = makeClient(stub.baseUrl, "itest-6");

    const status = await fetchStatus(client);
    expect(status.phase).toBe("Box");
    expect(status.ledger.spent_loc_ms).toBe(36600);
    expect(status.categories.map((c) => c.name)).toEqual(["rivet", "bracket"]);
    expect(status.budget_remaining_ms).toBe(963400);
  });
});
