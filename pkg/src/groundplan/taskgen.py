"""Pick-and-place task corpora, instruction templates and ground-truth subgoal chains."""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

from .gateway import ChatSession, EpisodeContext
from .parser import PrimitiveCall
from .prompts import paraphrase_prompt
from .world import (
    Environment,
    FluentTrue,
    GoalSpec,
    ObjectAt,
    WorldState,
    place_for_task,
)

logger = logging.getLogger(__name__)

TEMPLATES = (
    "Move the {obj} to the {target}. It is currently on the {source}.",
    "Move the {obj} from the {source} to the {target}",
    "Put the {obj} on the {target}. The {obj} is on the {source}.",
)


class ImpossibleEnv(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    object: str
    source: Optional[str]
    target: Optional[str]
    instructions: tuple[str, ...]
    goal: GoalSpec
    seed: int = 0
    kind: str = "pick_place"  # "pick_place" | "industrial"
    # explicit chain for hand-authored tasks; derived for pick-and-place
    chain: tuple[PrimitiveCall, ...] = field(default=())

    def __post_init__(self):
        if self.kind == "pick_place" and self.source == self.target:
            raise ValueError("source and target must differ")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "object": self.object,
            "source": self.source,
            "target": self.target,
            "instructions": list(self.instructions),
            "goal": self.goal.to_dict(),
            "seed": self.seed,
            "kind": self.kind,
            "chain": [c.to_dict() for c in self.chain],
        }

    @classmethod
    def from_dict(cls, data) -> "TaskSpec":
        return cls(
            task_id=data["task_id"],
            object=data["object"],
            source=data.get("source"),
            target=data.get("target"),
            instructions=tuple(data["instructions"]),
            goal=GoalSpec.from_dict(data["goal"]),
            seed=data.get("seed", 0),
            kind=data.get("kind", "pick_place"),
            chain=tuple(PrimitiveCall.from_dict(c) for c in data.get("chain", ())),
        )


def render_instruction(spec: TaskSpec, template_index: int) -> str:
    if not 0 <= template_index < len(TEMPLATES):
        raise IndexError(f"template index must be in 0..{len(TEMPLATES) - 1}")
    return TEMPLATES[template_index].format(obj=spec.object, source=spec.source, target=spec.target)


def generate_corpus(env: Environment, n: int, seed: int) -> list[TaskSpec]:
    if len(env.locations) < 2:
        raise ImpossibleEnv("a pick-and-place task needs at least two locations")
    if not env.objects:
        raise ImpossibleEnv("the environment has no objects")
    rng = random.Random(seed)
    corpus = []
    for i in range(n):
        obj = rng.choice(env.object_names)
        source = rng.choice(env.locations)
        target = rng.choice([loc for loc in env.locations if loc != source])
        first = rng.randrange(len(TEMPLATES))
        order = [first] + [k for k in range(len(TEMPLATES)) if k != first]
        spec = TaskSpec(
            task_id=f"task-{i:03d}",
            object=obj,
            source=source,
            target=target,
            instructions=(),
            goal=GoalSpec((ObjectAt(obj, target),)),
            seed=rng.randrange(2**31),
        )
        corpus.append(replace(spec, instructions=tuple(render_instruction(spec, k) for k in order)))
    return corpus


def mentions_all(text: str, spec: TaskSpec) -> bool:
    return all(name in text for name in (spec.object, spec.source, spec.target))


def paraphrase_corpus(
    corpus: Sequence[TaskSpec], backend, retries: int = 3
) -> list[TaskSpec]:
    """Replace instruction variants 2 and 3 of each task with validated paraphrases.

    A paraphrase must name the object, the source and the target verbatim;
    after ``retries`` failed attempts the template rendering is kept.
    """
    out = []
    for spec in corpus:
        variants = [spec.instructions[0]]
        for k in (1, 2):
            accepted = None
            for _ in range(retries):
                session = ChatSession(backend, "paraphrase", EpisodeContext(task=spec))
                text, _ = session.send(paraphrase_prompt(spec.instructions[0]))
                text = text.strip().strip('"').strip()
                if mentions_all(text, spec) and text not in variants:
                    accepted = text
                    break
                logger.info("rejected paraphrase for %s: %r", spec.task_id, text)
            variants.append(accepted if accepted is not None else spec.instructions[k])
        out.append(replace(spec, instructions=tuple(variants)))
    return out


def ground_truth_chain(spec: TaskSpec) -> list[PrimitiveCall]:
    if spec.chain:
        return list(spec.chain)
    return [
        PrimitiveCall("move_to", (spec.source,)),
        PrimitiveCall("grasp", (spec.object,)),
        PrimitiveCall("move_to", (spec.target,)),
        PrimitiveCall("put_down", (spec.object, spec.target)),
    ]


def task_state(spec: TaskSpec, env: Environment) -> WorldState:
    """Initial state of the episode for ``spec``."""
    if spec.kind != "pick_place":
        return env.initial
    return place_for_task(env, spec.object, spec.source, spec.seed)


def industrial_tasks() -> list[TaskSpec]:
    def call(name, *args):
        return PrimitiveCall(name, args)

    return [
        TaskSpec(
            task_id="charger",
            object="charger",
            source=None,
            target="outlet",
            instructions=(
                "Plug the charger cable in the outlet.",
                "Take the charger and plug it into the outlet.",
                "The charger needs to go into the outlet, please plug it in.",
            ),
            goal=GoalSpec((FluentTrue("charger_plugged"),)),
            kind="industrial",
            chain=(call("grasp", "charger", "plug"), call("plug_in", "charger", "outlet")),
        ),
        TaskSpec(
            task_id="probe",
            object="probe",
            source=None,
            target="rack",
            instructions=(
                "Put the voltage probe in its rack.",
                "Store the probe in the rack.",
                "Place the probe back into its rack.",
            ),
            goal=GoalSpec((FluentTrue("probe_racked"),)),
            kind="industrial",
            chain=(call("grasp", "probe", "handle"), call("place_in_rack", "probe")),
        ),
        TaskSpec(
            task_id="taskboard",
            object="probe cable",
            source=None,
            target="board",
            instructions=(
                "Solve the task board: first push the blue button, then plug the probe cable"
                " into the board, then push the red button, and finally open the trapdoor.",
                "Press the blue button, connect the probe cable to the board, press the red"
                " button and then open the trapdoor.",
                "Complete the task board sequence: blue button, probe cable into the board,"
                " red button, trapdoor.",
            ),
            goal=GoalSpec(
                tuple(
                    FluentTrue(f)
                    for f in (
                        "button_blue_pressed",
                        "probe_cable_plugged",
                        "button_red_pressed",
                        "trapdoor_open",
                    )
                ),
                order=("button_blue_pressed", "probe_cable_plugged", "button_red_pressed", "trapdoor_open"),
            ),
            kind="industrial",
            chain=(
                call("press_button", "blue"),
                call("grasp", "probe cable", "plug"),
                call("plug_in", "probe cable", "board"),
                call("press_button", "red"),
                call("open_trapdoor"),
            ),
        ),
    ]


def resolve_instruction(text: str, env: Environment) -> Optional[TaskSpec]:
    """Best-effort pick-and-place TaskSpec from a free-form service instruction.

    The object is the catalog object named in the text; of the two named
    locations, the one introduced by "from" or "is (currently/now) on" is
    the source. With a single named location, that is the target and the
    source is wherever ``env.initial`` has the object. Returns None when
    this cannot be decided.
    """
    objs = [o for o in env.object_names if o.lower() in text.lower()]
    if len(objs) != 1:
        return None
    lowered = text.lower()
    found = []
    for loc in sorted(env.locations, key=len, reverse=True):
        for m in re.finditer(re.escape(loc.lower()), lowered):
            if not any(s <= m.start() < e for s, e, _ in found):
                found.append((m.start(), m.end(), loc))
    names = []
    for _, _, loc in sorted(found):
        if loc not in names:
            names.append(loc)
    source = None
    if len(names) == 1:
        source = env.initial.location_of(objs[0])
        if source is None or source == names[0]:
            return None
        names.append(source)
    if len(names) != 2:
        return None
    if len(found) > 1 or source is None:
        source = None
        for loc in names:
            pattern = r"(from|is (currently |now )?(on|at)|currently (on|at)|now (on|at)) the " + re.escape(loc.lower())
            if re.search(pattern, lowered):
                source = loc
                break
    if source is None:
        return None
    target = names[1] if names[0] == source else names[0]
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return TaskSpec(
        task_id=f"adhoc-{digest[:8]}",
        object=objs[0],
        source=source,
        target=target,
        instructions=(text,),
        goal=GoalSpec((ObjectAt(objs[0], target),)),
        seed=int(digest[:8], 16),
    )


def corpus_to_json(corpus: Sequence[TaskSpec]) -> str:
    return json.dumps([spec.to_dict() for spec in corpus], indent=2, sort_keys=True)


def corpus_from_json(text: str) -> list[TaskSpec]:
    return [TaskSpec.from_dict(d) for d in json.loads(text)]


def load_corpus(path: Union[str, Path]) -> list[TaskSpec]:
    return corpus_from_json(Path(path).read_text(encoding="utf-8"))


def corpus_hash(corpus: Sequence[TaskSpec]) -> str:
    return hashlib.sha256(corpus_to_json(corpus).encode("utf-8")).hexdigest()
