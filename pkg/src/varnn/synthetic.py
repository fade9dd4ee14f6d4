"""Deterministic ATIS-like corpus generator.

Sentences follow a small flight-query grammar ("from CITY to CITY on DAY")
with departure, arrival, date and time slots in IOB form, giving 9 labels
and a vocabulary of about 60 words. Some templates open with a bare city
whose role is only revealed by the next word ("boston to denver" vs
"denver from boston"), so a left-to-right tagger cannot label it reliably.
A few cities never occur in the training split; held-out sentences that
mention them can only be tagged from context.
"""

from .core import make_rng

CITIES = [
    "boston", "denver", "dallas", "atlanta", "seattle", "chicago", "pittsburgh",
    "baltimore", "phoenix", "miami", "new york", "san francisco", "los angeles",
    "salt lake city",
]
DAYS = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
MONTHS = ["june", "july", "august"]
ORDINALS = ["first", "second", "third"]
PERIODS = ["morning", "afternoon", "evening"]
HOURS = ["5", "6", "7", "8"]

TEMPLATES = [
    "show me flights from {dept} to {arr} on {date}",
    "flights from {dept} to {arr} {time}",
    "i need a flight from {dept} to {arr} on {date} {time}",
    "list flights to {arr} from {dept}",
    "what are the fares from {dept} to {arr}",
    "i want to go to {arr} from {dept} on {date}",
    "cheapest flight leaving {dept} {time} arriving in {arr}",
    "{dept} to {arr} on {date}",
    "{arr} from {dept} on {date}",
    "{dept} to {arr} {time}",
    "{arr} from {dept} {time}",
    "flights {dept} to {arr} please",
    "please list {date} flights from {dept} to {arr}",
]


def _date(rng):
    kind = rng.integers(3)
    if kind == 0:
        return [DAYS[rng.integers(len(DAYS))]]
    if kind == 1:
        return ["next", DAYS[rng.integers(len(DAYS))]]
    return [MONTHS[rng.integers(len(MONTHS))], ORDINALS[rng.integers(len(ORDINALS))]]


def _time(rng):
    kind = rng.integers(3)
    if kind == 0:
        return [PERIODS[rng.integers(len(PERIODS))]]
    if kind == 1:
        return [("early", "late")[rng.integers(2)], PERIODS[rng.integers(len(PERIODS))]]
    return [HOURS[rng.integers(len(HOURS))], ("am", "pm")[rng.integers(2)]]


def _slot(words, label):
    return [(w, ("B-" if i == 0 else "I-") + label) for i, w in enumerate(words)]


SLOT_TYPES = ("dept", "arr", "date", "time")


HELDOUT_CITIES = ("phoenix", "miami")


def generate_sentence(rng, label_noise=0.0, cities=CITIES):
    """One sentence as ``(word, label)`` pairs.

    With probability ``label_noise`` each slot is annotated with a wrong,
    randomly chosen slot type (the words are unchanged).
    """
    template = TEMPLATES[rng.integers(len(TEMPLATES))]
    dept, arr = rng.choice(len(cities), size=2, replace=False)
    fillers = {
        "{dept}": cities[dept].split(),
        "{arr}": cities[arr].split(),
        "{date}": _date(rng),
        "{time}": _time(rng),
    }
    sentence = []
    for tok in template.split():
        if tok in fillers:
            label = tok[1:-1]
            if label_noise and rng.random() < label_noise:
                label = rng.choice([t for t in SLOT_TYPES if t != label])
            sentence.extend(_slot(fillers[tok], str(label)))
        else:
            sentence.append((tok, "O"))
    return sentence


def generate_corpus(n, seed=0, label_noise=0.0, exclude=()):
    rng = make_rng(seed)
    cities = [c for c in CITIES if c not in exclude]
    return [generate_sentence(rng, label_noise, cities) for _ in range(n)]


def generate_splits(n_train=2000, n_val=500, n_test=500, seed=0, label_noise=0.0,
                    heldout=HELDOUT_CITIES):
    """Independent train/validation/test draws from the grammar.

    Only the training split receives label noise, and it never mentions the
    ``heldout`` cities.
    """
    return (generate_corpus(n_train, seed, label_noise, exclude=heldout),
            generate_corpus(n_val, seed + 1),
            generate_corpus(n_test, seed + 2))


TINY = [
    "show me flights from boston to denver",
    "flights from denver to new york",
    "from dallas to boston please",
    "show me flights to new york from dallas",
    "flights to boston please",
    "from denver to new york please",
    "show flights from denver to dallas",
    "list flights to denver from boston",
]


def tiny_corpus():
    """Eight hand-written sentences (12 words, 4 labels) for overfit checks."""
    corpus = []
    for text in TINY:
        sentence, role = [], None
        for w in text.split():
            if w in ("from", "to"):
                role = "dept" if w == "from" else "arr"
                label = "O"
            elif w == "york":
                label = "I-" + role
            elif w in ("boston", "denver", "dallas", "new"):
                label = "B-" + role
            else:
                label = "O"
            sentence.append((w, label))
        corpus.append(sentence)
    return corpus
