"""Small template-generated multi-turn corpus for smoke runs and tests.

Each dialogue follows one of a handful of scripts; slot values chosen for a
dialogue recur across its turns, so a turn is largely predictable from the
previous one while the corpus as a whole stays lexically varied.
"""
from __future__ import annotations

import random
from pathlib import Path

from .corpus import Dialogue

SLOTS = {
    "name": ["Tom", "Mary", "John", "Anna", "Mike", "Lucy", "David", "Emma", "Jack", "Sarah", "Paul", "Nina", "Sam", "Kate", "Leo", "Rose"],
    "friend": ["Peter", "Julia", "Mark", "Helen", "Oscar", "Grace", "Victor", "Alice", "Henry", "Clara", "Ben", "Olga"],
    "place": ["station", "park", "office", "bank", "market", "library", "airport", "hotel", "museum", "cinema", "hospital", "school"],
    "item": ["coffee", "ticket", "room", "taxi", "bread", "phone", "map", "tea", "camera", "jacket", "laptop", "umbrella"],
    "time": ["at nine", "at noon", "tomorrow", "tonight", "on Monday", "next week", "on Friday", "this evening", "at seven", "on Sunday"],
    "feeling": ["great", "tired", "happy", "busy", "fine", "excited", "sleepy", "nervous", "relaxed", "bored"],
    "price": ["two", "five", "ten", "twenty", "fifty", "three", "eight", "forty"],
    "color": ["red", "blue", "green", "black", "white", "yellow", "brown", "grey"],
    "food": ["pizza", "soup", "rice", "salad", "noodles", "cake", "fish", "pasta"],
}

# consecutive turns share a slot, so a turn is predictable from the one before it
SCRIPTS = [
    [
        "Hello {name}, how are you?",
        "I am {feeling} today, thanks.",
        "Why are you so {feeling}?",
        "I met {friend} at the {place}.",
        "Does {friend} still work at the {place}?",
        "Yes, {friend} works there {time}.",
    ],
    [
        "Excuse me, where is the {place}?",
        "The {place} is on your left.",
        "Can I walk to the {place} {time}?",
        "Yes, the {place} is open {time}.",
        "Thank you, {name}.",
        "You are welcome, see you {time}.",
    ],
    [
        "Can I buy a {color} {item}, please?",
        "Sure, the {color} {item} is {price} dollars.",
        "Here are {price} dollars for the {item}.",
        "Thank you. Enjoy your {item}.",
        "Do you also sell {food}?",
        "Yes, the {food} is fresh {time}.",
    ],
    [
        "Are you free {time}, {name}?",
        "Yes, I am free {time}.",
        "Let us go to the {place} {time}.",
        "Good idea, I like the {place}.",
        "Should we invite {friend} to the {place}?",
        "Sure, {friend} loves the {place}.",
    ],
    [
        "Did you see {friend} today?",
        "Yes, {friend} was at the {place}.",
        "What was {friend} doing at the {place}?",
        "{friend} was buying a {color} {item}.",
        "Why does {friend} need a {item}?",
        "{friend} needs the {item} {time}.",
    ],
    [
        "I lost my {color} {item} at the {place}.",
        "Oh no, when did you lose your {item}?",
        "I lost the {item} {time}.",
        "Let us ask at the {place} about your {item}.",
        "Good, the {place} closes {time}.",
    ],
    [
        "I would like to book a {item} for {time}.",
        "A {item} for {time} costs {price} dollars.",
        "{price} dollars is fine for me.",
        "Great, your {item} is ready {time}.",
        "Thank you, my name is {name}.",
    ],
    [
        "What would you like to eat, {name}?",
        "I would like some {food}, please.",
        "The {food} here costs {price} dollars.",
        "{price} dollars for {food} is cheap.",
        "Then let us order the {food} {time}.",
    ],
    [
        "You look {feeling} today, {name}.",
        "Yes, I feel {feeling} because of work.",
        "Is work at the {place} hard?",
        "The {place} is busy {time}.",
        "Maybe {friend} can help you at the {place}.",
        "Good idea, I will call {friend} {time}.",
    ],
    [
        "My {color} {item} is broken.",
        "Where did you buy the {color} {item}?",
        "I bought the {item} at the {place}.",
        "The {place} can fix your {item} {time}.",
        "Then I will go to the {place} {time}.",
    ],
]


def toy_dialogues(n: int = 100, seed: int = 0, min_turns: int = 3) -> list[Dialogue]:
    rnd = random.Random(seed)
    out = []
    for _ in range(n):
        script = rnd.choice(SCRIPTS)
        values = {k: rnd.choice(v) for k, v in SLOTS.items()}
        k = rnd.randint(min_turns, len(script))
        out.append(Dialogue(tuple(t.format(**values) for t in script[:k])))
    return out


def write_dailydialog(dialogues: list[Dialogue], path: str | Path) -> Path:
    """Write in the DailyDialog ``turn __eou__ turn __eou__`` line format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [" __eou__ ".join(d.sentences) + " __eou__" for d in dialogues]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_toy_splits(out_dir: str | Path, n_train: int = 100, n_valid: int = 20, n_test: int = 20, seed: int = 0) -> dict:
    out_dir = Path(out_dir)
    paths = {}
    for offset, (split, n) in enumerate((("train", n_train), ("valid", n_valid), ("test", n_test))):
        paths[split] = write_dailydialog(toy_dialogues(n, seed=seed + 1000 * offset), out_dir / f"{split}.txt")
    return paths
