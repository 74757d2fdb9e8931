"""HTTP facade over the verification queue, so a human can be the oracle.

Tasks are handed out in exactly the engine's ranked order, one outstanding
task per client session, under a lease that returns abandoned tasks to the
head of the line. Charges land when a verdict is applied, never at issuance,
and every issued task has its worst-case cost reserved up front so a flock of
concurrent annotators still cannot overdraw the budget.
"""

from __future__ import annotations

import io
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .engine import (
    BUDGET_EXHAUSTED,
    QUEUE_EXHAUSTED,
    PassReport,
    apply_box_verdict,
    apply_class_verdict,
    build_box_task,
    build_class_task,
    costs_for,
    split_budget,
)
from .model import (
    BoundingBox,
    BoxState,
    ClassState,
    Dataset,
    ExperimentConfig,
    PoolState,
    ValidationError,
)
from .oracle import Answer, TaskKind, VerificationTask, Verdict
from .selection import median_u_cls, rank_descending

LEASE_SECONDS = 300.0


@dataclass
class Lease:
    task: VerificationTask
    session: str
    expires_at: float
    worst_case_ms: int
    channel: str


class VerificationService:
    """Single-writer queue state; every public method takes the lock."""

    def __init__(
        self,
        dataset: Dataset,
        pool: PoolState,
        cfg: ExperimentConfig,
        clock=time.monotonic,
        lease_seconds: float = LEASE_SECONDS,
    ):
        self.dataset = dataset
        self.pool = pool
        self.cfg = cfg
        self.costs = costs_for(cfg)
        self.clock = clock
        self.lease_seconds = lease_seconds
        total = sum(cfg.cycle_budgets_ms)
        self.ledger = split_budget(total, cfg.loc_budget_fraction)

        self.phase = TaskKind.BOX.value
        self.box_report = PassReport(pass_kind=TaskKind.BOX.value)
        self.class_report = PassReport(pass_kind=TaskKind.CLASS.value)
        ranked = rank_descending(
            [e.annotation for e in pool if e.box_state == BoxState.PSEUDO], "u_loc"
        )
        self.queue: deque[str] = deque(a.id for a in ranked)
        self.front: deque[VerificationTask] = deque()
        self.leases: dict[str, Lease] = {}
        self.session_task: dict[str, str] = {}
        self.reserved = {"loc": 0, "cls": 0}
        self.tau_cls: float | None = None
        self.applied: list[dict] = []
        self.seq = 0
        self.lock = threading.Lock()

    # -- internals (caller holds the lock) ---------------------------------

    def _purge_expired(self) -> None:
        now = self.clock()
        for task_id in [t for t, lease in self.leases.items() if lease.expires_at <= now]:
            lease = self.leases.pop(task_id)
            self.session_task.pop(lease.session, None)
            self.reserved[lease.channel] -= lease.worst_case_ms
            self.front.append(lease.task)

    def _worst_case(self, kind: str) -> int:
        if kind == TaskKind.BOX.value:
            return self.costs.verify_box_ms + self.costs.draw_box_ms
        return self.costs.verify_class_ms + self.costs.assign_class_ms

    def _channel(self, kind: str) -> str:
        return "loc" if kind == TaskKind.BOX.value else "cls"

    def _available(self, channel: str) -> int:
        remaining = (
            self.ledger.remaining_loc_ms if channel == "loc" else self.ledger.remaining_cls_ms
        )
        return remaining - self.reserved[channel]

    def _lease_out(self, task: VerificationTask, session: str) -> Lease:
        channel = self._channel(task.kind.value)
        lease = Lease(
            task=task,
            session=session,
            expires_at=self.clock() + self.lease_seconds,
            worst_case_ms=self._worst_case(task.kind.value),
            channel=channel,
        )
        self.leases[task.task_id] = lease
        self.session_task[session] = task.task_id
        self.reserved[channel] += lease.worst_case_ms
        return lease

    def _close_box_phase(self) -> None:
        worst = self._worst_case(TaskKind.BOX.value)
        self.box_report.stopped_reason = (
            BUDGET_EXHAUSTED if self.ledger.remaining_loc_ms < worst else QUEUE_EXHAUSTED
        )
        self.box_report.spent_ms = self.ledger.spent_loc_ms
        self.ledger.transfer_loc_leftover()
        eligible = self.pool.class_eligible()
        ranked = rank_descending([e.annotation for e in eligible], "u_cls")
        self.queue = deque(a.id for a in ranked)
        self.tau_cls = median_u_cls(eligible) if eligible else None
        self.phase = TaskKind.CLASS.value

    def _close_class_phase(self) -> None:
        worst = self._worst_case(TaskKind.CLASS.value)
        self.class_report.stopped_reason = (
            BUDGET_EXHAUSTED if self.ledger.remaining_cls_ms < worst else QUEUE_EXHAUSTED
        )
        self.class_report.spent_ms = self.ledger.spent_cls_ms
        self.phase = "done"

    def _build_task(self, annotation_id: str) -> VerificationTask:
        entry = self.pool.get(annotation_id)
        image = self.dataset.image(entry.annotation.image_id)
        task_id = f"{'box' if self.phase == TaskKind.BOX.value else 'cls'}-c0-{self.seq:06d}"
        self.seq += 1
        builder = build_box_task if self.phase == TaskKind.BOX.value else build_class_task
        return builder(entry, image, self.cfg, task_id, 0)

    # -- public operations --------------------------------------------------

    def next_task(self, session: str) -> tuple[str, Lease | None]:
        """Returns (status, lease): status in {task, wait, drained, budget}.

        `wait` means nothing can be issued until outstanding leases resolve;
        `budget` means the run ended because the money ran out; `drained`
        means every queued task was answered.
        """
        with self.lock:
            self._purge_expired()
            held = self.session_task.get(session)
            if held and held in self.leases:
                return "task", self.leases[held]

            if self.front:
                channel = self._channel(self.front[0].kind.value)
                if self._available(channel) >= self._worst_case(self.front[0].kind.value):
                    return "task", self._lease_out(self.front.popleft(), session)
                if self.leases:
                    return "wait", None
                # Nobody is working and the returned task no longer fits.
                self.front.clear()
                self.queue.clear()

            while True:
                if self.phase == "done":
                    ended_on_budget = BUDGET_EXHAUSTED in (
                        self.box_report.stopped_reason,
                        self.class_report.stopped_reason,
                    )
                    return ("budget" if ended_on_budget else "drained"), None

                kind = self.phase
                worst = self._worst_case(kind)
                channel = self._channel(kind)

                if kind == TaskKind.CLASS.value:
                    self._trust_sweep()

                if not self.queue:
                    if self.leases:
                        return "wait", None
                    if self.phase == TaskKind.BOX.value:
                        self._close_box_phase()
                        continue
                    self._close_class_phase()
                    continue

                if self._available(channel) < worst:
                    if self.leases:
                        return "wait", None
                    self.queue.clear()
                    if self.phase == TaskKind.BOX.value:
                        self._close_box_phase()
                        continue
                    self._close_class_phase()
                    continue

                annotation_id = self.queue.popleft()
                task = self._build_task(annotation_id)
                return "task", self._lease_out(task, session)

    def _trust_sweep(self) -> None:
        """Mark trusted entries at the queue head, exactly as the engine
        would on its walk: free, and only up to the first verify-needed one."""
        while self.queue:
            entry = self.pool.get(self.queue[0])
            ann = entry.annotation
            if (
                self.tau_cls is not None
                and ann.confidence > self.cfg.conf_trust
                and ann.u_cls < self.tau_cls
            ):
                entry.advance_class(ClassState.TRUSTED)
                entry.record(0, "Trusted", 0)
                self.class_report.trusted += 1
                self.queue.popleft()
                continue
            break

    def parse_verdict(self, task: VerificationTask, body: dict) -> Verdict:
        if not isinstance(body, dict):
            raise ValidationError("verdict body must be a JSON object")
        try:
            answer = Answer(body["answer"])
        except KeyError:
            raise ValidationError("verdict needs an 'answer' field") from None
        except ValueError:
            raise ValidationError(f"unknown answer {body.get('answer')!r}") from None
        new_box = None
        if body.get("new_box") is not None:
            new_box = BoundingBox.from_list(body["new_box"])
        new_class = body.get("new_class")
        if new_class is not None:
            new_class = int(new_class)
        verdict = Verdict(task.task_id, answer, new_box=new_box, new_class=new_class)
        verdict.matches(task)
        image = self.dataset.image(task.image_id)
        if verdict.answer == Answer.BOX_CORRECT:
            if verdict.new_box.w <= 0 or verdict.new_box.h <= 0:
                raise ValidationError("corrected box needs positive width and height")
            if not verdict.new_box.fits_in(image.width, image.height):
                raise ValidationError(
                    f"corrected box {verdict.new_box.as_tuple()} exceeds image "
                    f"bounds {image.width}x{image.height}"
                )
        if verdict.answer == Answer.CLASS_CORRECT:
            if not 0 <= verdict.new_class < self.dataset.num_classes:
                raise ValidationError(
                    f"new_class {verdict.new_class} outside [0, {self.dataset.num_classes})"
                )
        return verdict

    def apply(self, task_id: str, body: dict, session: str) -> dict:
        """Validate and commit one verdict; raises KeyError for a dead task
        and ValidationError for a malformed one."""
        with self.lock:
            self._purge_expired()
            lease = self.leases.get(task_id)
            if lease is None:
                raise KeyError(task_id)
            if lease.session != session:
                raise KeyError(task_id)
            task = lease.task
            verdict = self.parse_verdict(task, body)

            del self.leases[task_id]
            self.session_task.pop(session, None)
            self.reserved[lease.channel] -= lease.worst_case_ms

            entry = self.pool.get(task.annotation_id)
            if task.kind == TaskKind.BOX:
                apply_box_verdict(
                    self.pool,
                    entry,
                    verdict,
                    self.dataset.image(task.image_id),
                    self.ledger,
                    self.costs,
                    0,
                    self.box_report,
                )
            else:
                apply_class_verdict(
                    self.pool,
                    entry,
                    verdict,
                    self.dataset.num_classes,
                    self.ledger,
                    self.costs,
                    0,
                    self.class_report,
                )
            record = {
                "seq": len(self.applied),
                "task_id": task.task_id,
                "kind": task.kind.value,
                "annotation_id": task.annotation_id,
                "answer": verdict.answer.value,
                "new_box": verdict.new_box.to_list() if verdict.new_box else None,
                "new_class": verdict.new_class,
            }
            self.applied.append(record)
            return record

    def status(self) -> dict:
        with self.lock:
            self._purge_expired()
            return {
                "phase": self.phase,
                "ledger": self.ledger.to_dict(),
                "counts": self.pool.state_counts(),
                "box_pass": self.box_report.to_dict(),
                "class_pass": self.class_report.to_dict(),
                "outstanding": len(self.leases),
                "categories": [
                    {"index": k, "id": c.id, "name": c.name}
                    for k, c in enumerate(self.dataset.categories)
                ],
                "budget_remaining_ms": self.ledger.remaining_ms,
            }

    def log(self) -> list[dict]:
        with self.lock:
            return list(self.applied)


def create_app(service: VerificationService, images_dir: str | None = None):
    """FastAPI wiring around a VerificationService."""
    app = FastAPI(title="annotation verification queue")
    # the browser UI is served as static files from wherever; let it call us
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["X-Session-Id", "Content-Type"],
    )
    app.state.service = service
    app.state.images_dir = Path(images_dir).resolve() if images_dir else None

    def session_of(request: Request) -> str:
        return request.headers.get("X-Session-Id", "default")

    def crop_url_for(task: VerificationTask) -> str | None:
        if app.state.images_dir is None:
            return None
        image = service.dataset.image(task.image_id)
        if not image.raster_path:
            return None
        r = task.region
        crop = f"{int(r.x)},{int(r.y)},{max(1, round(r.w))},{max(1, round(r.h))}"
        return f"/api/v1/images/{task.image_id}?crop={crop}"

    @app.get("/api/v1/tasks/next")
    def get_next_task(request: Request):
        status, lease = service.next_task(session_of(request))
        if status == "task":
            doc = lease.task.to_dict()
            doc["lease_expires_in_s"] = max(0.0, lease.expires_at - service.clock())
            doc["crop_url"] = crop_url_for(lease.task)
            return doc
        if status == "budget":
            raise HTTPException(status_code=410, detail="annotation budget exhausted")
        if status == "drained":
            raise HTTPException(status_code=404, detail="all tasks complete")
        raise HTTPException(status_code=404, detail="no task available; others outstanding")

    @app.post("/api/v1/tasks/{task_id}/verdict")
    def post_verdict(task_id: str, body: dict, request: Request):
        try:
            record = service.apply(task_id, body, session_of(request))
        except KeyError:
            raise HTTPException(
                status_code=409, detail=f"task {task_id} is not outstanding"
            ) from None
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {"applied": True, **record}

    @app.get("/api/v1/status")
    def get_status():
        return service.status()

    @app.get("/api/v1/log")
    def get_log():
        return {"verdicts": service.log()}

    @app.get("/api/v1/images/{image_id}")
    def get_image(image_id: str, crop: str | None = None):
        if app.state.images_dir is None:
            raise HTTPException(status_code=404, detail="no image store configured")
        try:
            image = service.dataset.image(image_id)
        except ValidationError:
            raise HTTPException(status_code=404, detail="unknown image") from None
        if not image.raster_path:
            raise HTTPException(status_code=404, detail="synthetic scene; no raster")
        path = (app.state.images_dir / image.raster_path).resolve()
        if app.state.images_dir not in path.parents and path != app.state.images_dir:
            raise HTTPException(status_code=404, detail="image not under store")
        if not path.is_file():
            raise HTTPException(status_code=404, detail="raster missing")

        from PIL import Image

        with Image.open(path) as im:
            im = im.convert("RGB")
            if crop:
                try:
                    x, y, w, h = (float(v) for v in crop.split(","))
                except ValueError:
                    raise HTTPException(status_code=422, detail="crop must be x,y,w,h") from None
                left = max(0, int(x))
                top = max(0, int(y))
                right = min(im.width, int(x + w))
                bottom = min(im.height, int(y + h))
                if right <= left or bottom <= top:
                    raise HTTPException(status_code=422, detail="empty crop")
                im = im.crop((left, top, right, bottom))
            buf = io.BytesIO()
            im.save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    return app


def bootstrap_pool(dataset: Dataset, provider, cfg: ExperimentConfig) -> PoolState:
    """Score one prediction batch and build the pool the service will work."""
    from .model import new_pool
    from .selection import filter_by_confidence
    from .uncertainty import score_annotations

    primary, secondary = provider.predictions(0, PoolState())
    scored = score_annotations(dataset, primary, secondary)
    return new_pool(dataset, filter_by_confidence(scored, cfg.tau_conf))
