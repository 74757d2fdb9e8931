"""Drive the verification service over HTTP, then replay its log offline.

A scripted client answers every task the queue serves. The recorded verdict
log is then fed back through the offline passes; the replayed pool must be
identical, which is what makes human sessions auditable.
"""

import json

from fastapi.testclient import TestClient

from delr import (
    ExperimentConfig,
    MockDetectorProvider,
    NoiseParams,
    ReplayOracle,
    VerificationService,
    bootstrap_pool,
    create_app,
    generate_scenario,
    rank_descending,
    run_box_pass,
    run_class_pass,
    split_budget,
)


def scripted_answer(task: dict) -> dict:
    if task["kind"] == "Box":
        # keep tight boxes, redraw sloppy ones to the search region for show
        return {"answer": "BoxKeep"} if task["task_id"].endswith(("0", "1", "2", "3")) else {
            "answer": "BoxCorrect",
            "new_box": task["region"],
        }
    return {"answer": "ClassKeep"}


def main() -> None:
    ds = generate_scenario(
        num_images=10,
        num_classes=4,
        objects_per_image_range=(1, 3),
        box_size_range=(20.0, 60.0),
        image_size=(320.0, 240.0),
        seed=77,
    )
    noise = NoiseParams(jitter_frac=0.12)
    cfg = ExperimentConfig(cycle_budgets_ms=[10**7], seed=77)
    provider = MockDetectorProvider(ds, noise, cfg.seed)

    service = VerificationService(ds, bootstrap_pool(ds, provider, cfg), cfg)
    client = TestClient(create_app(service))

    answered = 0
    while True:
        resp = client.get("/api/v1/tasks/next", headers={"X-Session-Id": "demo"})
        if resp.status_code != 200:
            break
        task = resp.json()
        client.post(
            f"/api/v1/tasks/{task['task_id']}/verdict",
            json=scripted_answer(task),
            headers={"X-Session-Id": "demo"},
        )
        answered += 1
    status = client.get("/api/v1/status").json()
    print(f"session answered {answered} tasks, spent "
          f"{status['ledger']['spent_loc_ms'] + status['ledger']['spent_cls_ms']} ms")

    log = client.get("/api/v1/log").json()["verdicts"]
    pool = bootstrap_pool(ds, provider, cfg)
    oracle = ReplayOracle(log)
    ledger = split_budget(sum(cfg.cycle_budgets_ms), cfg.loc_budget_fraction)
    box_ids = [a.id for a in rank_descending([e.annotation for e in pool], "u_loc")]
    run_box_pass(pool, box_ids, oracle, ledger, cfg, ds)
    ledger.transfer_loc_leftover()
    cls_ids = [a.id for a in rank_descending([e.annotation for e in pool.class_eligible()], "u_cls")]
    run_class_pass(pool, cls_ids, oracle, ledger, cfg, ds)

    same = json.dumps(pool.to_dict(), sort_keys=True) == json.dumps(
        service.pool.to_dict(), sort_keys=True
    )
    print(f"offline replay of {len(log)} recorded verdicts -> identical pool: {same}")


if __name__ == "__main__":
    main()
