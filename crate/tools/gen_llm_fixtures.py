#!/usr/bin/env python3
"""Regenerate the scripted-backend fixture packs under crates/core/fixtures.

Output is deterministic. Run from anywhere:

    python3 tools/gen_llm_fixtures.py
"""

import json
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "fixtures"
HOMES = ("h1", "h2", "h3")

WARM = {"r": 255, "g": 170, "b": 90}
WHITE = {"r": 255, "g": 255, "b": 255}
RED = {"r": 255, "g": 0, "b": 0}
GREEN = {"r": 0, "g": 255, "b": 0}
BLUE = {"r": 60, "g": 90, "b": 255}
PURPLE = {"r": 150, "g": 40, "b": 255}

LIGHTS = ("overhead_light", "lamp")


def act(device, settings, rooms=None):
    return {"device": device, "settings": settings, "rooms": rooms}


# Per command: goal type, trigger (persistent only), preferred actions and a
# phrase for the decline message. Actions name devices that may or may not
# exist in a given home; absent ones are dropped.
COMMANDS = {
    "make it less chilly in here": dict(
        actions=[act("thermostat", {"state": "heat", "temperature": 74})],
        missing="a thermostat or heater",
    ),
    "help me cool off": dict(
        actions=[
            act("thermostat", {"state": "cool", "temperature": 68}),
            act("ceiling_fan", {"state": True, "speed": 3}),
        ],
        missing="a thermostat or fan",
    ),
    "make it less stuffy in here": dict(
        actions=[act("ceiling_fan", {"state": True, "speed": 2}), act("thermostat", {"state": "cool", "temperature": 70})],
        missing="a fan or thermostat",
    ),
    "turn the AC off when it's cold outside": dict(
        trigger={"global": {"weather": "cold"}},
        actions=[act("thermostat", {"state": "off"})],
        missing="an air conditioner or thermostat",
    ),
    "turn the heat off when it's hot outside": dict(
        trigger={"global": {"weather": "hot"}},
        actions=[act("thermostat", {"state": "off"})],
        missing="a heater or thermostat",
    ),
    "make it comfortable at night": dict(
        trigger={"global": {"local_time": "10:00pm"}},
        actions=[
            act("thermostat", {"state": "heat", "temperature": 70}),
            act("ceiling_fan", {"state": True, "speed": 1}),
        ],
        missing="a thermostat or fan",
    ),
    "make it less bright": dict(
        actions=[act("overhead_light", {"brightness": 0.3}, ["livingroom"]), act("lamp", {"brightness": 0.3}, ["livingroom"])],
        missing="dimmable lights",
    ),
    "get ready for bed": dict(
        actions=[
            act("overhead_light", {"state": False}, ["livingroom", "kitchen"]),
            act("lamp", {"state": True, "brightness": 0.2, "color": WARM}, ["bedroom"]),
        ],
        missing="lights",
    ),
    "help me see better": dict(
        actions=[act("overhead_light", {"state": True, "brightness": 1.0, "color": WHITE}, ["livingroom"])],
        missing="lights",
    ),
    "keep it well-lit after sundown": dict(
        trigger={"global": {"local_time": "7:00pm"}},
        actions=[act("overhead_light", {"state": True, "brightness": 0.8}, ["livingroom", "kitchen"])],
        missing="lights",
    ),
    "use natural light once the sun is up": dict(
        trigger={"global": {"local_time": "7:00am"}},
        actions=[act("overhead_light", {"state": False}), act("lamp", {"state": False})],
        missing="lights",
    ),
    "keep the lights off when I'm gone": dict(
        trigger={"entry": {"motion": False}, "livingroom": {"motion": False}},
        actions=[act("overhead_light", {"state": False}), act("lamp", {"state": False})],
        missing="lights",
    ),
    "check the front door": dict(
        actions=[act("doorbell_camera", {"state": True, "recording": True})],
        missing="a camera or doorbell",
    ),
    "lock up": dict(actions=[act("smart_lock", {"locked": True})], missing="a smart lock"),
    "let the guest in": dict(actions=[act("smart_lock", {"locked": False})], missing="a smart lock"),
    "lock the door when I leave": dict(
        trigger={"entry": {"motion": True}},
        actions=[act("smart_lock", {"locked": True})],
        missing="a smart lock",
    ),
    "let me know when there's a visitor": dict(
        trigger={"entry": {"motion": True}},
        actions=[act("doorbell_camera", {"state": True, "recording": True})],
        missing="a camera or doorbell",
    ),
    "keep the home safe during the day": dict(
        trigger={"global": {"local_time": "9:00am"}},
        actions=[act("smart_lock", {"locked": True}), act("doorbell_camera", {"state": True, "recording": True})],
        missing="a lock or camera",
    ),
    "turn off the thermostat when I don't need it": dict(
        trigger={"livingroom": {"motion": False}},
        actions=[act("thermostat", {"state": "off"})],
        missing="a thermostat",
    ),
    "save energy when I'm gone": dict(
        trigger={"entry": {"motion": False}, "livingroom": {"motion": False}},
        actions=[
            act("overhead_light", {"state": False}),
            act("lamp", {"state": False}),
            act("thermostat", {"state": "off"}),
            act("tv", {"state": False}),
        ],
        missing="devices that use power",
    ),
    "help me save energy": dict(
        trigger={"global": {"local_time": "11:00pm"}},
        actions=[act("overhead_light", {"state": False}), act("tv", {"state": False})],
        missing="devices that use power",
    ),
    "help me lower my power bill": dict(
        trigger={"global": {"local_time": "9:00am"}},
        actions=[act("overhead_light", {"state": False}), act("thermostat", {"state": "off"})],
        missing="devices that use power",
    ),
    "set up for a party": dict(
        actions=[
            act("overhead_light", {"state": True, "brightness": 0.9, "color": PURPLE}, ["livingroom"]),
            act("speaker", {"state": True, "playlist": "party", "volume": 60}),
        ],
        missing="lights or speakers",
    ),
    "make it cozy in here": dict(
        actions=[
            act("overhead_light", {"state": False}, ["livingroom"]),
            act("lamp", {"state": True, "brightness": 0.4, "color": WARM}, ["livingroom"]),
        ],
        missing="lights or speakers",
    ),
    "help me wind down": dict(
        actions=[
            act("lamp", {"state": True, "brightness": 0.2, "color": WARM}, ["livingroom"]),
            act("speaker", {"state": True, "playlist": "calm", "volume": 20}),
        ],
        missing="lights or speakers",
    ),
    "make it cozy when it rains": dict(
        trigger={"global": {"weather": "rain"}},
        actions=[
            act("lamp", {"state": True, "brightness": 0.5, "color": WARM}, ["livingroom"]),
            act("speaker", {"state": True, "playlist": "rainy day", "volume": 25}),
        ],
        missing="lights or speakers",
    ),
    "let me know when the weather is bad": dict(
        trigger={"global": {"weather": "storm"}},
        actions=[act("overhead_light", {"state": True, "color": BLUE}, ["livingroom"])],
        missing="lights or speakers",
    ),
    "help me sleep better": dict(
        trigger={"global": {"local_time": "10:30pm"}},
        actions=[act("overhead_light", {"state": False}, ["bedroom"]), act("lamp", {"state": False}, ["bedroom"])],
        missing="lights or speakers",
    ),
    "clean up the bedroom": dict(actions=[act("robot_vacuum", {"state": "cleaning"})], missing="a robot vacuum"),
    "stop cleaning": dict(actions=[act("robot_vacuum", {"state": "docked"})], missing="a robot vacuum"),
    "tidy up the house": dict(actions=[act("robot_vacuum", {"state": "cleaning"})], missing="a robot vacuum"),
    "stop cleaning after sunset": dict(
        trigger={"global": {"local_time": "7:00pm"}},
        actions=[act("robot_vacuum", {"state": "docked"})],
        missing="a robot vacuum",
    ),
    "don't clean when people are here": dict(
        trigger={"livingroom": {"motion": True}},
        actions=[act("robot_vacuum", {"state": "docked"})],
        missing="a robot vacuum",
    ),
    "clean up while I'm gone": dict(
        trigger={"entry": {"motion": False}, "livingroom": {"motion": False}},
        actions=[act("robot_vacuum", {"state": "cleaning"})],
        missing="a robot vacuum",
    ),
    "give me some privacy": dict(actions=[act("blinds", {"position": 0.0})], missing="blinds or shades"),
    "let some sun in": dict(actions=[act("blinds", {"position": 1.0})], missing="blinds or shades"),
    "finish the coffee": dict(actions=[act("coffee_maker", {"state": True, "strength": "medium"})], missing="a coffee maker"),
    "keep it humid at night": dict(
        trigger={"bedroom": {"motion": True}, "global": {"local_time": "10:00pm"}},
        actions=[act("humidifier", {"state": True, "level": 0.5})],
        missing="a humidifier",
    ),
    "I need coffee in the morning": dict(
        trigger={"global": {"local_time": "7:00am"}},
        actions=[act("coffee_maker", {"state": True, "strength": "strong"})],
        missing="a coffee maker",
    ),
    "let some sun in if the weather is nice": dict(
        trigger={"global": {"weather": "sunny"}},
        actions=[act("blinds", {"position": 1.0})],
        missing="blinds or shades",
    ),
}

# What a model shown only lights proposes when nothing relevant exists.
LIGHT_FALLBACK = [act("overhead_light", {"state": True, "brightness": 0.7, "color": WARM}, ["livingroom"])]

# Cells answered with structurally broken output in the single-prompt baseline.
BROKEN_BASELINE = {
    ("h1", "finish the coffee"): "mutated",
    ("h2", "help me see better"): "rooms_stripped",
    ("h3", "set up for a party"): "malformed",
    ("h1", "lock up"): "malformed",
}

CRITIQUES = [
    dict(
        home="h3",
        command="lock the door when I leave",
        critique="only lock it once nobody is moving around the entry",
        trigger={"entry": {"motion": False}},
    ),
    dict(
        home="h1",
        command="get ready for bed",
        critique="leave the bedroom lamp a little brighter",
        patch=("bedroom", "lamp", {"brightness": 0.4}),
    ),
    dict(
        home="h3",
        command="check the front door",
        critique="also turn on the entry light",
        extra=("entry", "overhead_light", {"state": True, "brightness": 1.0}),
    ),
    dict(home="h2", command="help me cool off", critique="I don't want anything to change", cannot=True),
]
ACCEPTS = [("h2", "make it less chilly in here"), ("h3", "I need coffee in the morning")]


def load_home(name):
    base = FIXTURES / "homes" / name
    return json.loads((base / "devices.json").read_text()), json.loads((base / "sensors.json").read_text())


def load_lexicon():
    return json.loads((FIXTURES / "lexicon.json").read_text())["patterns"]


def load_relevant():
    return json.loads((FIXTURES / "category_device_types.json").read_text())["relevant_types"]


def load_commands():
    data = json.loads((FIXTURES / "commands.json").read_text())
    return data["commands"] if isinstance(data, dict) else data


def tag_of(lexicon, device):
    for pattern, tag in sorted(lexicon.items(), key=lambda kv: -len(kv[0])):
        if pattern in device:
            return tag
    return None


def resolve(devices, actions):
    """Concrete (room, device, settings) for the actions that fit this home."""
    out = []
    for a in actions:
        for room, room_devices in devices.items():
            if a["rooms"] is not None and room not in a["rooms"]:
                continue
            spec = room_devices.get(a["device"])
            if spec is None:
                continue
            settings = {k: v for k, v in a["settings"].items() if k in spec}
            if settings:
                out.append((room, a["device"], settings))
    return out


def assignments(resolved):
    doc = {}
    for room, device, settings in resolved:
        doc.setdefault(room, {}).setdefault(device, {}).update(settings)
    return doc


def subset(devices, resolved):
    doc = {}
    for room, device, _ in resolved:
        doc.setdefault(room, {})[device] = devices[room][device]
    return doc


def sensor_subset(sensors, trigger):
    return {scope: {name: sensors[scope][name] for name in names} for scope, names in trigger.items()}


def describe_value(setting, value):
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, dict):
        return "rgb({r}, {g}, {b})".format(**value)
    if setting in ("brightness", "level", "position") and isinstance(value, float):
        return f"{round(value * 100)}%"
    return str(value)


def describe(resolved):
    parts = []
    for room, device, settings in resolved:
        pretty = device.replace("_", " ")
        bits = ", ".join(
            f"{setting} {describe_value(setting, value)}" if setting != "state" else describe_value(setting, value)
            for setting, value in settings.items()
        )
        parts.append(f"the {room} {pretty} ({bits})")
    return "; ".join(parts)


def describe_trigger(trigger):
    bits = []
    for scope, readings in trigger.items():
        for name, value in readings.items():
            where = "" if scope == "global" else f"{scope} "
            shown = json.dumps(value) if not isinstance(value, str) else value
            bits.append(f"{where}{name.replace('_', ' ')} is {shown}")
    return " and ".join(bits)


def plan_json(resolved, trigger, explanation=None):
    if trigger is None:
        doc = assignments(resolved)
        doc["explanation"] = explanation or f"I have set {describe(resolved)}."
        return doc
    return {
        "trigger": trigger,
        "action": assignments(resolved),
        "explanation": explanation or f"When the {describe_trigger(trigger)}, I will set {describe(resolved)}.",
    }


def dump(value):
    return json.dumps(value, indent=2)


def rule(kind, command, home, response, context=None):
    r = {"kind": kind, "command": command}
    if home is not None:
        r["home"] = home
    if context is not None:
        r["context"] = context
    r["response"] = response
    return r


def break_plan(style, plan):
    text = dump(plan)
    if style == "malformed":
        return "Here's the plan:\n" + text.replace('"', "'")
    if style == "rooms_stripped":
        flat = {}
        for room, devs in plan.items():
            if room == "explanation":
                continue
            flat.update(devs)
        flat["explanation"] = plan["explanation"]
        return dump(flat)
    if style == "mutated":
        broken = json.loads(text)
        broken.setdefault("kitchen", {})["coffee_maker"] = {"state": True}
        broken["explanation"] = "I have started the coffee maker in the kitchen."
        return dump(broken)
    raise ValueError(style)


class Cell:
    def __init__(self, home, devices, sensors, command, record, lexicon, relevant_types):
        spec = COMMANDS[command]
        self.home = home
        self.command = command
        self.persistent = record["goal_type"] == "persistent"
        self.category = record["category"]
        self.trigger = spec.get("trigger")
        assert (self.trigger is not None) == self.persistent, command
        self.missing = spec["missing"]
        tags = relevant_types[self.category]
        chosen = resolve(devices, spec["actions"])
        self.relevant = [
            c for c in chosen if "*" in tags or tag_of(lexicon, c[1]) in tags
        ]
        self.fallback = resolve(devices, LIGHT_FALLBACK)
        self.devices = devices
        self.sensors = sensors
        # Known split-chain slip: in h2 the light is picked for tidying up.
        self.quirk = home == "h2" and command == "tidy up the house"

    @property
    def split_relevant(self):
        return bool(self.relevant) or self.quirk

    def split_targets(self):
        if self.quirk:
            return [("livingroom", "overhead_light", {"state": True, "brightness": 1.0})]
        return self.relevant if self.relevant else self.fallback

    def decline(self):
        return (
            "RELEVANT: false\n"
            f"I'm sorry, I couldn't find {self.missing} in your home, so I can't help with that yet. "
            "Is there something else I could try, or could you tell me more?"
        )

    def plan(self, targets):
        explanation = None
        if self.quirk:
            explanation = "I have turned the living room light all the way up so you can see what needs tidying."
        return plan_json(targets, self.trigger, explanation)

    def split_rules(self):
        kind = "plan_persistent" if self.persistent else "plan_immediate"
        targets = self.split_targets()
        out = [
            rule("clarify", self.command, self.home, "RELEVANT: true" if self.split_relevant else self.decline()),
            rule("filter_devices", self.command, self.home, dump(subset(self.devices, targets))),
        ]
        if self.persistent:
            out.append(rule("filter_sensors", self.command, self.home, dump(sensor_subset(self.sensors, self.trigger))))
        out.append(rule(kind, self.command, self.home, dump(self.plan(targets))))
        return out

    def naive_targets(self):
        # Over-eager: fills the gap with lights and adds a lamp in rich homes.
        if not self.relevant:
            return self.fallback
        targets = list(self.relevant)
        if self.home == "h3" and all(c[1] not in LIGHTS for c in targets):
            targets.append(("livingroom", "lamp", {"state": True}))
        return targets

    def naive_rules(self):
        suffix = "persistent" if self.persistent else "immediate"
        targets = self.naive_targets()
        plan = plan_json(targets, self.trigger)
        baseline = dump(plan)
        style = BROKEN_BASELINE.get((self.home, self.command))
        if style is not None:
            baseline = break_plan(style, plan)
        picked = self.relevant if self.relevant else self.fallback
        return [
            rule(f"baseline_{suffix}", self.command, self.home, baseline),
            rule("clarify_filter", self.command, self.home, "RELEVANT: true\n" + dump(subset(self.devices, picked))),
            rule(f"filter_plan_{suffix}", self.command, self.home, dump(plan)),
        ]


def feedback_rules(cells):
    out = []
    for c in CRITIQUES:
        cell = cells[(c["home"], c["command"])]
        targets = [(r, d, dict(s)) for r, d, s in cell.split_targets()]
        trigger = cell.trigger
        if c.get("cannot"):
            response = "CANNOT_IMPROVE\nI can't find a better way to cool things down without changing anything."
        else:
            if "trigger" in c:
                trigger = c["trigger"]
            if "patch" in c:
                room, device, settings = c["patch"]
                for r, d, s in targets:
                    if (r, d) == (room, device):
                        s.update(settings)
            if "extra" in c:
                targets.append(c["extra"])
            response = dump(plan_json(targets, trigger))
        out.append(rule("feedback_revise", c["command"], c["home"], response, context=c["critique"]))
    return out


def critique_set():
    entries = [
        {"home": c["home"], "command": c["command"], "verdict": "critique", "critique": c["critique"]} for c in CRITIQUES
    ]
    entries += [{"home": h, "command": cmd, "verdict": "accept"} for h, cmd in ACCEPTS]
    return {"version": 1, "critiques": entries}


def classify_rules(commands):
    return [rule("classify_goal", r["command"], None, f"GOAL: {r['goal_type']}") for r in commands]


STUDIO_LAMPS = [("livingroom", "lamp"), ("bedroom", "lamp"), ("studio", "left_lamp"), ("studio", "right_lamp")]


def studio_rules():
    devices, sensors = load_home("studio")
    home = "studio"

    def pick(pairs):
        doc = {}
        for room, device in pairs:
            doc.setdefault(room, {})[device] = devices[room][device]
        return dump(doc)

    time_only = dump({"global": {"local_time": sensors["global"]["local_time"]}})
    out = []

    morning = "Help me get up in the morning."
    morning_plan = {
        "trigger": {"global": {"local_time": "7:00am"}},
        "action": {
            "livingroom": {
                "stereo": {"state": True, "playlist": "ambient"},
                "thermostat": {"mode": "heat", "temperature": 72},
                "lamp": {"state": True, "brightness": 50, "color": WHITE},
            },
            "bedroom": {"lamp": {"state": True, "brightness": 50, "color": WHITE}},
        },
        "explanation": "At 7:00am the stereo starts an ambient playlist, the thermostat heats to 72, "
        "and the living room and bedroom lamps come on in white at brightness 50.",
    }
    out += [
        rule("classify_goal", morning, home, "GOAL: persistent"),
        rule("clarify", morning, home, "RELEVANT: true"),
        rule(
            "filter_devices",
            morning,
            home,
            pick([("livingroom", "stereo"), ("livingroom", "thermostat"), ("livingroom", "lamp"), ("bedroom", "lamp")]),
        ),
        rule("filter_sensors", morning, home, time_only),
        rule("plan_persistent", morning, home, dump(morning_plan)),
    ]

    cozy = "Can you make the lights a little cozier?"
    cozy_plan = {}
    for room, device in STUDIO_LAMPS:
        cozy_plan.setdefault(room, {})[device] = {"state": True, "brightness": 120, "color": WARM}
    cozy_plan["explanation"] = "Every lamp is now a warm amber at a softer brightness."
    out += [
        rule("classify_goal", cozy, home, "GOAL: immediate"),
        rule("clarify", cozy, home, "RELEVANT: true"),
        rule("filter_devices", cozy, home, pick(STUDIO_LAMPS)),
        rule("plan_immediate", cozy, home, dump(cozy_plan)),
    ]

    arrive = "I'm getting home at 5:00 today, can you make the living room nice before I get here?"

    def arrive_plan(amp):
        action = {
            "livingroom": {
                "stereo": {"state": True, "playlist": "ambient"},
                "thermostat": {"mode": "heat", "temperature": 72},
            },
            "studio": {"guitar_amp_plug": {"state": amp}},
        }
        for room, device in STUDIO_LAMPS:
            action.setdefault(room, {})[device] = {"state": True, "brightness": 254, "hue": 0.5, "saturation": 1.0}
        amp_text = "the guitar amp plug switches on" if amp else "the guitar amp plug stays off"
        return {
            "trigger": {"global": {"local_time": "5:00pm"}},
            "action": action,
            "explanation": "At 5:00pm the stereo plays an ambient playlist, the thermostat heats to 72, "
            f"every lamp goes to full brightness at hue 0.5 and saturation 1.0, and {amp_text}.",
        }

    arrive_devices = [("livingroom", "stereo"), ("livingroom", "thermostat")] + STUDIO_LAMPS + [
        ("studio", "guitar_amp_plug")
    ]
    out += [
        rule("classify_goal", arrive, home, "GOAL: persistent"),
        rule("clarify", arrive, home, "RELEVANT: true"),
        rule("filter_devices", arrive, home, pick(arrive_devices)),
        rule("filter_sensors", arrive, home, time_only),
        rule("plan_persistent", arrive, home, dump(arrive_plan(True))),
        rule("feedback_revise", arrive, home, dump(arrive_plan(False)), context="amp"),
    ]

    fun = "Do something fun with the lights in the studio."
    fun_plan = {
        "studio": {
            "left_lamp": {"state": True, "brightness": 254, "color": RED},
            "right_lamp": {"state": True, "brightness": 254, "color": GREEN},
        },
        "explanation": "The studio lamps are on at full brightness, one red and one green.",
    }
    out += [
        rule("classify_goal", fun, home, "GOAL: immediate"),
        rule("clarify", fun, home, "RELEVANT: true"),
        rule("filter_devices", fun, home, pick([("studio", "left_lamp"), ("studio", "right_lamp")])),
        rule("plan_immediate", fun, home, dump(fun_plan)),
    ]
    return out


def dialogue_rules():
    devices, _ = load_home("h3")
    command = "I'm tired"
    coffee = [("kitchen", "coffee_maker", {"state": True, "strength": "strong"})]
    return [
        rule("classify_goal", command, "h3", "GOAL: immediate"),
        rule("clarify", command, "h3", "RELEVANT: true", context="waking up"),
        rule(
            "clarify",
            command,
            "h3",
            "RELEVANT: false\nI'm sorry to hear that. Would you like help relaxing, or help waking up?",
        ),
        rule("filter_devices", command, "h3", dump(subset(devices, coffee))),
        rule("plan_immediate", command, "h3", dump(plan_json(coffee, None, "I have started a strong pot of coffee."))),
    ]


def pack(rules):
    return {"version": 1, "strict": True, "rules": rules}


def write(path, value):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=2, ensure_ascii=False) + "\n")


def main():
    lexicon = load_lexicon()
    relevant_types = load_relevant()
    commands = load_commands()
    assert {r["command"] for r in commands} == set(COMMANDS), "command table out of date"
    cells = {}
    split, naive = [], []
    for home in HOMES:
        devices, sensors = load_home(home)
        for record in commands:
            cell = Cell(home, devices, sensors, record["command"], record, lexicon, relevant_types)
            cells[(home, record["command"])] = cell
            split += cell.split_rules()
            naive += cell.naive_rules()
    shared = classify_rules(commands) + feedback_rules(cells)
    write(FIXTURES / "llm" / "full_split.json", pack(split + shared))
    write(FIXTURES / "llm" / "naive_mimic.json", pack(naive + split + shared))
    write(FIXTURES / "llm" / "interactive.json", pack(studio_rules() + dialogue_rules()))
    write(FIXTURES / "critiques" / "reference.json", critique_set())


if __name__ == "__main__":
    main()
