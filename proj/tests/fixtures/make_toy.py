#!/usr/bin/env python3
"""Regenerates the synthetic five-class caption task under toy/.

Every caption names its class once, adds one or two words from that class's
keyword pool and one to three filler words shared by all classes. Output is fully
determined by SEED.
"""
import json
import pathlib
import random

SEED = 1
CLASSES = ["dog", "rain", "siren", "engine", "bird"]
POOLS = {
    "dog": ["barking", "puppy", "growling", "howling", "leash"],
    "rain": ["drizzle", "downpour", "raindrops", "puddle", "umbrella"],
    "siren": ["ambulance", "police", "alarm", "wailing", "emergency"],
    "engine": ["motor", "idling", "revving", "truck", "exhaust"],
    "bird": ["chirping", "tweeting", "feathers", "nest", "singing"],
}
FILLERS = ("a the loud quiet distant near street house outside while someone "
           "walks talks softly in background and with on far room people "
           "door wind water").split()
TRAIN_PER_CLASS = 20
HELD_OUT_PER_CLASS = 10


def caption(rng, name):
    words = [name]
    words += rng.sample(POOLS[name], rng.randint(1, 2))
    words += rng.sample(FILLERS, rng.randint(1, 3))
    rng.shuffle(words)
    return " ".join(words)


def main():
    out = pathlib.Path(__file__).resolve().parent / "toy"
    out.mkdir(exist_ok=True)
    rng = random.Random(SEED)
    train = [caption(rng, c) for c in CLASSES for _ in range(TRAIN_PER_CLASS)]
    held = [caption(rng, c) for c in CLASSES for _ in range(HELD_OUT_PER_CLASS)]
    (out / "raw_train.txt").write_text("\n".join(train) + "\n")
    (out / "raw_heldout.txt").write_text("\n".join(held) + "\n")
    (out / "synonyms.json").write_text(json.dumps({c: POOLS[c] for c in CLASSES}, indent=2) + "\n")
    subset = {c: POOLS[c] for c in CLASSES[:3]}
    (out / "synonyms_source3.json").write_text(json.dumps(subset, indent=2) + "\n")


if __name__ == "__main__":
    main()
