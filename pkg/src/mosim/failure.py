"""Power-failure injection, recovery, and persistency verification.

The verifiable contract: a store is *acknowledged* once its completion
was delivered to the request driver before the crash instant.  After
restore-and-recover,

  * every acknowledged store must be readable: the merged cache-over-
    flash view of each stored frame equals the newest acknowledged state;
  * nothing spurious may persist: every frame in flash or cache holds
    some acknowledged prefix state (page-granular replay may legally
    rewind flash to an older acknowledged state, never invent one).

The oracle is a flat shadow memory folded at acknowledgment time, plus
the full prefix history per frame.  Crash images are taken between
events; enumerating every event boundary of one forward run is exactly
equivalent to re-running with inject() at each instant because only
non-volatile state enters the image.
"""

from dataclasses import dataclass, field

from .addressing import fold_store, store_token
from .controller import STORE
from .machine import Machine


class AckOracle:
    """Flat shadow of acknowledged operations, folded at ack time."""

    def __init__(self):
        self.frames = {}      # frame -> latest acknowledged fingerprint
        self.history = {}     # frame -> [0, fp1, fp2, ...]
        self.acked_stores = 0
        self.acked_loads = 0
        self.load_mismatches = 0
        self.page_size = None

    def on_ack(self, req):
        frame = req.addr // self.page_size
        if req.kind == STORE:
            token = store_token(req.req_id, req.addr, req.size)
            offset = req.addr % self.page_size
            prev = self.frames.get(frame, 0)
            fp = fold_store(prev, offset, req.size, token)
            self.frames[frame] = fp
            self.history.setdefault(frame, [0]).append(fp)
            self.acked_stores += 1
        else:
            self.acked_loads += 1
            expect = self.frames.get(frame, 0)
            if getattr(req, "load_fp", expect) != expect:
                self.load_mismatches += 1

    def states_of(self, frame):
        return self.history.get(frame, [0])

    def snapshot(self):
        return {"frames": dict(self.frames),
                "history": {f: list(h) for f, h in self.history.items()},
                "acked_stores": self.acked_stores}

    @staticmethod
    def from_snapshot(snap, page_size):
        o = AckOracle()
        o.frames = dict(snap["frames"])
        o.history = {f: list(h) for f, h in snap["history"].items()}
        o.acked_stores = snap["acked_stores"]
        o.page_size = page_size
        return o


@dataclass
class CrashPlan:
    injection_times: list = None     # explicit instants, or None
    every_event: bool = False
    seed: int = 0


@dataclass
class PersistencyVerdict:
    injection_time: int
    boundary: int
    acknowledged_writes_preserved: bool
    spurious_data: bool
    replayed_cids: list
    acked_stores: int
    bad_frames: list = field(default_factory=list)

    @property
    def ok(self):
        return self.acknowledged_writes_preserved and not self.spurious_data


def attach_oracle(machine):
    oracle = AckOracle()
    oracle.page_size = machine.cfg.mos.page_size_bytes
    machine.oracle = oracle
    return oracle


def restore_and_recover(cfg, image, boundary=-1):
    """Bring a crashed image back up, replay the journal, and judge the
    recovered state against the acknowledged-writes oracle."""
    machine = Machine.from_image(cfg, image, label=cfg.label + "-recovery")
    reissued = machine.recover()
    oracle = AckOracle.from_snapshot(image["oracle"], cfg.mos.page_size_bytes)
    bad = []
    # acknowledged stores must all be readable at their newest state
    for frame, want in oracle.frames.items():
        got = machine.mos_view(frame)
        if got != want:
            bad.append(("lost", frame, got, want))
    # no frame anywhere may hold a never-acknowledged state
    spurious = False
    for frame, fp in machine.flash.content.items():
        if fp not in oracle.states_of(frame):
            spurious = True
            bad.append(("spurious-flash", frame, fp, oracle.states_of(frame)[-1]))
    for frame, fp in machine.cached_frames().items():
        if fp not in oracle.states_of(frame):
            spurious = True
            bad.append(("spurious-cache", frame, fp, oracle.states_of(frame)[-1]))
    return PersistencyVerdict(
        injection_time=image["time"],
        boundary=boundary,
        acknowledged_writes_preserved=not any(k == "lost" for k, *_ in bad),
        spurious_data=spurious,
        replayed_cids=[c.cid for c in reissued],
        acked_stores=oracle.acked_stores,
        bad_frames=bad,
    )


def inject(cfg, records, at):
    """Run the trace until `at`, then freeze the surviving system image."""
    machine = Machine(cfg)
    attach_oracle(machine)
    machine.load_trace(records)
    machine.start_trace()
    machine.sim.run_until(at)
    return machine.crash_image()


def crash_images_per_event(cfg, records):
    """One forward run, yielding (boundary_index, image) after every event."""
    machine = Machine(cfg)
    attach_oracle(machine)
    machine.load_trace(records)
    machine.start_trace()
    boundary = 0
    yield boundary, machine.crash_image()
    while machine.sim.step() is not None:
        boundary += 1
        yield boundary, machine.crash_image()


def crash_sweep(cfg, records, plan=None):
    """Verdict per injection point.  every_event enumeration is bounded to
    short traces; longer ones should sample explicit instants."""
    plan = plan or CrashPlan(every_event=True)
    verdicts = []
    if plan.every_event:
        if len(records) > 500:
            raise ValueError("every-event enumeration is limited to 500 requests")
        for boundary, image in crash_images_per_event(cfg, records):
            verdicts.append(restore_and_recover(cfg, image, boundary))
    else:
        for at in plan.injection_times:
            image = inject(cfg, records, at)
            verdicts.append(restore_and_recover(cfg, image))
    return verdicts
