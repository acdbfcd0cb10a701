#!/usr/bin/env python3
"""Generate the small WoZ-format corpus used by the tests.

Writes ontology.json and woz_{train,validate,test}_en.json into the target
directory (default: crates/core/tests/fixtures/woz). The validation split
is a copy of the training split so that early stopping tracks training fit.
Output is deterministic.
"""

import json
import random
import sys
from pathlib import Path

FOODS = sorted([
    "afghan", "african", "asian oriental", "australasian", "australian", "austrian",
    "barbeque", "basque", "belgian", "bistro", "brazilian", "british", "canapes",
    "cantonese", "caribbean", "catalan", "chinese", "christmas", "corsica", "creative",
    "crossover", "cuban", "danish", "eastern european", "english", "eritrean",
    "european", "french", "fusion", "gastropub", "german", "greek", "halal",
    "hungarian", "indian", "indonesian", "international", "irish", "italian",
    "jamaican", "japanese", "korean", "kosher", "latin american", "lebanese",
    "light bites", "malaysian", "mediterranean", "mexican", "middle eastern",
    "modern american", "modern eclectic", "modern european", "modern global",
    "molecular gastronomy", "moroccan", "new zealand", "north african",
    "north american", "north indian", "northern european", "panasian", "persian",
    "polish", "polynesian", "portuguese", "romanian", "russian", "scandinavian",
    "scottish", "seafood",
]) + ["dontcare"]
PRICES = ["cheap", "moderate", "expensive", "dontcare"]
AREAS = ["centre", "north", "west", "south", "east", "outskirts", "dontcare"]
REQUESTABLE = ["address", "area", "food", "phone", "price range", "postcode", "name"]

COMMON_FOODS = ["indian", "chinese", "italian", "korean", "french", "british", "european",
                "greek", "japanese", "seafood", "mexican", "lebanese"]
NAMES = ["the gandhi", "curry prince", "pizza hut", "bangkok city", "cote", "the eagle",
         "galleria", "la tasca", "yippee noodle bar", "loch fyne", "la margherita", "meze bar"]

REQUEST_PHRASES = {
    "address": "address",
    "area": "area",
    "food": "type of food",
    "phone": "phone number",
    "price range": "price range",
    "postcode": "postcode",
    "name": "name",
}


def turn(idx, system, user, acts, label, belief):
    state = dict(belief)
    for slot, value in label:
        if slot != "request":
            state[slot] = value
    belief_list = [{"slots": [[s, v]], "act": "inform"} for s, v in sorted(state.items())]
    belief_list += [{"slots": [["request", v]], "act": "request"} for s, v in label if s == "request"]
    return {
        "turn_idx": idx,
        "system_transcript": system,
        "transcript": user,
        "system_acts": acts,
        "turn_label": [list(p) for p in label],
        "belief_state": belief_list,
    }, state


def implicit_reference_dialogue():
    turns = []
    belief = {}
    script = [
        ("", "i am looking for a restaurant in the north part of town .",
         [], [("area", "north")]),
        ("what type of food would you like ?", "i do not care about the type of food .",
         ["food"], [("food", "dontcare")]),
        ("nirala serves indian food and golden wok serves chinese food . which one would you like ?",
         "nirala is indian and golden wok is chinese ? tell me about golden wok , the chinese one .",
         [["food", "indian"], ["food", "chinese"]], [("food", "chinese")]),
        ("golden wok is a chinese restaurant in the north part of town .",
         "what is the phone number and address ?", [], [("request", "phone"), ("request", "address")]),
        ("the phone number is 01223 350688 and it is at 191 histon road chesterton .",
         "and the postcode ?", [], [("request", "postcode")]),
        ("the postcode is cb4 3hl .",
         "what about the other one , nirala ? what is its phone number ?", [],
         [("food", "indian"), ("request", "phone")]),
        ("nirala can be reached at 01223 360966 .", "thank you , goodbye .", [], []),
    ]
    for i, (system, user, acts, label) in enumerate(script):
        t, belief = turn(i, system, user, acts, label, belief)
        turns.append(t)
    return {"dialogue_idx": 0, "dialogue": turns}


def inform_phrase(rng, slot, value):
    if value == "dontcare":
        return {
            "food": rng.choice(["any type of food is fine", "i do not care about the food"]),
            "price range": rng.choice(["any price is fine", "i do not care about the price"]),
            "area": rng.choice(["any part of town is fine", "i do not care about the area"]),
        }[slot]
    return {
        "food": rng.choice([f"i want {value} food", f"{value} food please", f"serving {value} food"]),
        "price range": rng.choice([f"something {value}", f"in the {value} price range", f"a {value} place"]),
        "area": rng.choice([f"in the {value}", f"in the {value} of town", f"the {value} part of town"]),
    }[slot]


def pick(rng, slot):
    if slot == "food":
        return rng.choice(COMMON_FOODS + ["dontcare"])
    if slot == "price range":
        return rng.choice(PRICES)
    return rng.choice(AREAS)


SLOT_QUESTIONS = {
    "food": "what type of food would you like ?",
    "price range": "what price range are you looking for ?",
    "area": "what part of town do you have in mind ?",
}


def synthetic(rng, idx):
    belief = {}
    turns = []
    slots = ["food", "price range", "area"]
    rng.shuffle(slots)
    first = slots[: rng.choice([1, 2])]
    rest = [s for s in slots if s not in first]
    goal = {s: pick(rng, s) for s in slots}

    def add(system, user, acts, label):
        nonlocal belief
        t, belief = turn(len(turns), system, user, acts, label, belief)
        turns.append(t)

    opening = " and ".join(inform_phrase(rng, s, goal[s]) for s in first)
    add("", f"hello , i need a restaurant , {opening} .", [], [(s, goal[s]) for s in first])
    for s in rest:
        add(SLOT_QUESTIONS[s], inform_phrase(rng, s, goal[s]) + " .", [s], [(s, goal[s])])
    if rng.random() < 0.4:
        s = rng.choice(slots)
        new = pick(rng, s)
        if new != goal[s]:
            goal[s] = new
            acts = [[s, belief[s]]]
            add(f"you want {belief[s]} for the {s} , is that right ?",
                f"actually , {inform_phrase(rng, s, new)} instead .", acts, [(s, new)])
    name = rng.choice(NAMES)
    offer = f"{name} matches your request ."
    asked = rng.sample(REQUESTABLE, rng.choice([1, 2]))
    phrase = " and ".join(REQUEST_PHRASES[r] for r in asked)
    add(offer, f"what is the {phrase} ?", [], [("request", r) for r in asked])
    if rng.random() < 0.5:
        r = rng.choice([x for x in REQUESTABLE if x not in asked])
        add("here is the information you asked for .", f"can i also get the {REQUEST_PHRASES[r]} ?", [],
            [("request", r)])
    add("is there anything else ?", "no , thank you , goodbye .", [], [])
    return {"dialogue_idx": idx, "dialogue": turns}


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("crates/core/tests/fixtures/woz")
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20180829)
    train = [implicit_reference_dialogue()] + [synthetic(rng, i) for i in range(1, 20)]
    test = [synthetic(rng, i) for i in range(4)]
    ontology = {
        "informable": {"area": AREAS, "food": FOODS, "price range": PRICES},
        "requestable": REQUESTABLE,
    }
    assert len(FOODS) == 72 and len(AREAS) == 7 and len(PRICES) == 4
    (out / "ontology.json").write_text(json.dumps(ontology, indent=2) + "\n")
    for name, data in [("train", train), ("validate", train), ("test", test)]:
        (out / f"woz_{name}_en.json").write_text(json.dumps(data, indent=1) + "\n")


if __name__ == "__main__":
    main()
