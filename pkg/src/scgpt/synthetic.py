"""Deterministic multi-domain corpus generation from templated grammars.

A grammar file describes one domain in a line-oriented format:

    # comment
    domain taxi
    slot pickup : the old mill | king street station
    slot fare : 8 euros | 14 euros
    template quote ( pickup , fare , wait* ) : the ride from [pickup] costs
        [fare] { with a wait of [wait] } .
    template decline ( area=? ) : which part of town should the cab go to ?

(templates are written on one line; the wrap above is for this docstring
only).  Head entries are lexical slots, optional lexical slots marked with
a trailing ``*``, or fixed ``slot=value`` pairs whose value must be one of
the non-lexical markers.  The body is a whitespace-tokenized response in
which every lexical slot appears once as a ``[slot]`` placeholder; an
optional slot's placeholder sits inside a ``{ ... }`` group that is
dropped when the slot is not sampled.

The central invariant is that any rendering of any template has slot
error 0 against its own dialog act.  Validation enforces its static
preconditions: lexicon values may not collide with template text or with
other slots' values used in the same template, and every lexical slot
surfaces exactly once.  The shipped grammars are additionally swept by
the test suite.
"""

import hashlib
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .dataset import Corpus, Example
from .dialog_act import (
    NON_LEXICAL_VALUES,
    RESERVED_CHARS,
    DialogAct,
    DialogActSet,
    SlotValuePair,
    act_set,
    is_lexical_value,
    match_count,
)
from .errors import GrammarValidationError, ParseError

_NAME_RE = re.compile(r"[a-z][a-z0-9_]*")
_PLACEHOLDER_RE = re.compile(r"\[([a-z][a-z0-9_]*)\]")
_HEAD_RE = re.compile(r"([a-z][a-z0-9_]*)\s*\(\s*(.*?)\s*\)\s*$")

PRETRAIN_GRAMMARS = ("attraction", "hotel", "laptop", "restaurant", "shuttle", "train")
HELDOUT_GRAMMARS = ("museum", "taxi")


@dataclass(frozen=True)
class Template:
    """One response pattern: required slots, optional slots, fixed pairs."""

    intent: str
    required: tuple
    optional: tuple
    fixed: tuple
    body_tokens: tuple

    def head_slots(self) -> tuple:
        return self.required + self.optional + tuple(s for s, _ in self.fixed)


@dataclass(frozen=True)
class DomainGrammar:
    domain: str
    lexicons: tuple  # ordered (slot, (value, ...)) pairs
    templates: tuple

    def lexicon(self, slot: str) -> tuple:
        for name, values in self.lexicons:
            if name == slot:
                return values
        raise KeyError(slot)

    def intents(self) -> tuple:
        return tuple(sorted({t.intent for t in self.templates}))


def _fail(source: str, lineno: int, msg: str):
    raise GrammarValidationError(f"{source}:{lineno}: {msg}")


def _parse_head(head: str, source: str, lineno: int):
    m = _HEAD_RE.fullmatch(head.strip())
    if m is None:
        _fail(source, lineno, f"template head {head.strip()!r} is not 'intent ( ... )'")
    intent, inner = m.group(1), m.group(2)
    required, optional, fixed = [], [], []
    if inner:
        for item in inner.split(","):
            item = item.strip()
            if "=" in item:
                slot, _, value = item.partition("=")
                slot, value = slot.strip(), value.strip()
                if value.lower() not in NON_LEXICAL_VALUES:
                    _fail(source, lineno,
                          f"fixed value {value!r} for slot {slot!r} is lexical; "
                          "only non-lexical markers may be fixed in a head")
                fixed.append((slot, value))
            elif item.endswith("*"):
                optional.append(item[:-1].strip())
            else:
                required.append(item)
        for slot in required + optional + [s for s, _ in fixed]:
            if not _NAME_RE.fullmatch(slot):
                _fail(source, lineno, f"bad slot name {slot!r} in template head")
    names = required + optional + [s for s, _ in fixed]
    if len(set(names)) != len(names):
        _fail(source, lineno, f"duplicate slot in template head {head.strip()!r}")
    return intent, tuple(required), tuple(optional), tuple(fixed)


def _parse_body(tokens, template, source, lineno):
    """Check group structure and placeholder placement for one template."""
    placed = {}  # slot -> "outside" | "group"
    in_group = False
    group_slots = []
    for tok in tokens:
        if tok == "{":
            if in_group:
                _fail(source, lineno, "nested { } groups are not allowed")
            in_group = True
            group_slots = []
            continue
        if tok == "}":
            if not in_group:
                _fail(source, lineno, "unmatched } in template body")
            if len(group_slots) != 1:
                _fail(source, lineno,
                      "each { } group must contain exactly one optional-slot placeholder")
            in_group = False
            continue
        m = _PLACEHOLDER_RE.fullmatch(tok)
        if m is None:
            if "[" in tok or "]" in tok or "{" in tok or "}" in tok:
                _fail(source, lineno,
                      f"token {tok!r} mixes brackets with text; placeholders and "
                      "braces must be whole whitespace-separated tokens")
            continue
        slot = m.group(1)
        if slot in placed:
            _fail(source, lineno, f"placeholder [{slot}] appears more than once")
        if slot in template.required:
            if in_group:
                _fail(source, lineno, f"required slot [{slot}] may not sit in a {{ }} group")
            placed[slot] = "outside"
        elif slot in template.optional:
            if not in_group:
                _fail(source, lineno, f"optional slot [{slot}] must sit inside a {{ }} group")
            placed[slot] = "group"
            group_slots.append(slot)
        else:
            _fail(source, lineno, f"placeholder [{slot}] names no lexical slot of this template")
    if in_group:
        _fail(source, lineno, "unclosed { in template body")
    for slot in template.required + template.optional:
        if slot not in placed:
            _fail(source, lineno, f"lexical slot {slot!r} has no [{slot}] placeholder")


def _literal_text(tokens) -> str:
    """Body text with structural tokens removed, for collision checks."""
    return " ".join(t for t in tokens
                    if t not in ("{", "}") and not _PLACEHOLDER_RE.fullmatch(t))


def _check_collisions(grammar: DomainGrammar, source: str):
    """Reject value placements that could break the zero-slot-error invariant."""
    for t in grammar.templates:
        lexical = t.required + t.optional
        literal = _literal_text(t.body_tokens)
        for slot in lexical:
            for value in grammar.lexicon(slot):
                if match_count(value, literal):
                    raise GrammarValidationError(
                        f"{source}: value {value!r} of slot {slot!r} also occurs "
                        f"literally in a {t.intent} template body")
        for s1 in lexical:
            for s2 in lexical:
                if s1 == s2:
                    continue
                for v1 in grammar.lexicon(s1):
                    for v2 in grammar.lexicon(s2):
                        if match_count(v1, v2):
                            raise GrammarValidationError(
                                f"{source}: value {v1!r} of slot {s1!r} matches inside "
                                f"value {v2!r} of slot {s2!r}; both slots share a "
                                f"{t.intent} template")


def parse_grammar(text: str, source: str = "<string>") -> DomainGrammar:
    """Parse and validate one domain grammar from its file text."""
    domain = None
    lexicons = []
    seen_slots = set()
    templates = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        keyword, _, rest = line.partition(" ")
        rest = rest.strip()
        if keyword == "domain":
            if domain is not None:
                _fail(source, lineno, "second domain line")
            if not _NAME_RE.fullmatch(rest):
                _fail(source, lineno, f"bad domain name {rest!r}")
            domain = rest
        elif keyword == "slot":
            name, sep, values_part = rest.partition(":")
            name = name.strip()
            if not sep:
                _fail(source, lineno, "slot line needs 'slot name : v1 | v2'")
            if not _NAME_RE.fullmatch(name):
                _fail(source, lineno, f"bad slot name {name!r}")
            if name in seen_slots:
                _fail(source, lineno, f"slot {name!r} declared twice")
            values = tuple(" ".join(v.split()) for v in values_part.split("|"))
            if any(not v for v in values):
                _fail(source, lineno, f"slot {name!r} has an empty value")
            if len(set(values)) != len(values):
                _fail(source, lineno, f"slot {name!r} repeats a value")
            for v in values:
                bad = RESERVED_CHARS.intersection(v)
                if bad:
                    _fail(source, lineno,
                          f"value {v!r} contains reserved {sorted(bad)!r}")
                if v.lower() in NON_LEXICAL_VALUES:
                    _fail(source, lineno,
                          f"value {v!r} is a non-lexical marker; fix it in a "
                          "template head instead")
            seen_slots.add(name)
            lexicons.append((name, values))
        elif keyword == "template":
            head, sep, body = rest.partition(":")
            if not sep:
                _fail(source, lineno, "template line needs 'template head : body'")
            intent, required, optional, fixed = _parse_head(head, source, lineno)
            body_tokens = tuple(body.split())
            if not body_tokens:
                _fail(source, lineno, "template body is empty")
            t = Template(intent, required, optional, fixed, body_tokens)
            for slot in required + optional:
                if slot not in seen_slots:
                    _fail(source, lineno,
                          f"template uses undeclared slot {slot!r}")
            _parse_body(body_tokens, t, source, lineno)
            templates.append(t)
        else:
            raise ParseError(f"{source}:{lineno}: unknown directive {keyword!r}")
    if domain is None:
        raise GrammarValidationError(f"{source}: missing domain line")
    if not templates:
        raise GrammarValidationError(f"{source}: no templates")
    grammar = DomainGrammar(domain, tuple(lexicons), tuple(templates))
    _check_collisions(grammar, source)
    return grammar


def load_grammar(path) -> DomainGrammar:
    with open(path, encoding="utf-8") as fh:
        return parse_grammar(fh.read(), source=str(path))


def builtin_grammar(name: str) -> DomainGrammar:
    """Load one of the grammars shipped with the package."""
    ref = resources.files("scgpt") / "grammars" / f"{name}.gram"
    if not ref.is_file():
        raise GrammarValidationError(f"no builtin grammar named {name!r}")
    return parse_grammar(ref.read_text(encoding="utf-8"), source=f"builtin:{name}")


def builtin_grammars(names) -> tuple:
    return tuple(builtin_grammar(n) for n in names)


def render(grammar: DomainGrammar, template: Template, values: dict) -> Example:
    """Instantiate one template with concrete slot values.

    ``values`` maps every required slot, plus each optional slot being
    realized, to its value; groups of unrealized optional slots drop out.
    """
    out = []
    group = None  # buffered tokens of the current { } group
    keep_group = True
    for tok in template.body_tokens:
        if tok == "{":
            group, keep_group = [], True
            continue
        if tok == "}":
            if keep_group:
                out.extend(group)
            group = None
            continue
        m = _PLACEHOLDER_RE.fullmatch(tok)
        if m:
            slot = m.group(1)
            if slot not in values:
                keep_group = False  # only an unrealized optional slot lands here
                continue
            word = values[slot]
        else:
            word = tok
        (out if group is None else group).append(word)
    text = " ".join(out)
    pairs = [(s, values[s]) for s in template.required]
    pairs += [(s, values[s]) for s in template.optional if s in values]
    pairs += list(template.fixed)
    return Example(act_set(template.intent, pairs, grammar.domain), text, grammar.domain)


def _domain_rng(seed: int, domain: str) -> np.random.Generator:
    # independent per-domain streams keyed by the domain name itself,
    # so generating a subset of domains never shifts another's draws
    tag = int.from_bytes(hashlib.sha256(domain.encode()).digest()[:8], "big")
    return np.random.default_rng(np.random.SeedSequence((seed, tag)))


def _sample_example(grammar: DomainGrammar, rng) -> Example:
    t = grammar.templates[int(rng.integers(len(grammar.templates)))]
    chosen = dict.fromkeys(t.required)
    for slot in t.optional:
        if int(rng.integers(2)):
            chosen[slot] = None
    for slot in chosen:
        lex = grammar.lexicon(slot)
        chosen[slot] = lex[int(rng.integers(len(lex)))]
    return render(grammar, t, chosen)


def generate(grammars, n_per_domain: int, seed: int = 0) -> Corpus:
    """Sample a corpus of (dialog act, response) pairs from domain grammars.

    Intents, optional-slot subsets, and values are drawn uniformly from
    a seeded per-domain stream; every emitted example has slot error 0
    by construction.
    """
    if n_per_domain < 1:
        raise ValueError("n_per_domain must be at least 1")
    grammars = list(grammars)
    domains = [g.domain for g in grammars]
    if len(set(domains)) != len(domains):
        raise GrammarValidationError("duplicate domain among grammars")
    examples = []
    for g in grammars:
        rng = _domain_rng(seed, g.domain)
        examples.extend(_sample_example(g, rng) for _ in range(n_per_domain))
    return Corpus(tuple(examples), name=f"synthetic-{seed}")


_COPY_SYLLABLES = ("ba", "re", "mo", "ku", "zi", "ta", "lo", "ven",
                   "dar", "sul", "pri", "osh", "gla", "tev", "nim", "war")

# intent names, slot names, and template bodies for the coined-value domains
_COPY_SHAPES = (
    ("copydesk", ("record", "lookup", "purge"), ("ref", "tag", "owner"),
     ("entry [ref] { marked [tag] } { held by [owner] } is stored now .",
      "fetching [ref] { for [owner] } right away .",
      "dropped [ref] { and its [tag] note } from the ledger .")),
    ("copywire", ("relay", "trace", "flag"), ("code", "label", "batch"),
     ("signal [code] { labeled [label] } { in batch [batch] } went out .",
      "tracing [code] { across [batch] } as requested .",
      "raised a flag on [code] { over [label] } this morning .")),
    ("copyyard", ("stash", "fetch", "audit"), ("item", "mark", "crate"),
     ("placed [item] { with mark [mark] } { into crate [crate] } today .",
      "bringing [item] { out of [crate] } shortly .",
      "checked [item] { against [mark] } and all was fine .")),
)


def _coined_values(rng, n: int) -> list:
    """n distinct two-word values built from nonsense syllables."""
    values = set()
    while len(values) < n:
        words = []
        for _ in range(2):
            k = int(rng.integers(2, 4))
            words.append("".join(rng.choice(_COPY_SYLLABLES) for _ in range(k)))
        values.add(" ".join(words))
    return sorted(values)


def copy_task_grammars(n_values: int = 150, seed: int = 7) -> tuple:
    """Auxiliary domains whose slot values are freshly coined non-words.

    With lexicons this large and meaningless, a language model cannot
    predict a value from the response context; the only way to reduce
    loss on these domains is to copy the value out of the dialog-act
    prefix.  Mixing a few of them into a pre-training corpus teaches
    value copying that carries over to domains (and slot names) never
    seen during pre-training, standing in for the natural value entropy
    of corpora far larger than this package trains on.

    Each of the three domains draws its own ``3 * n_values`` distinct
    values so the usual collision validation still applies.
    """
    rng = np.random.default_rng(seed)
    grammars = []
    for name, intents, slots, bodies in _COPY_SHAPES:
        pool = _coined_values(rng, 3 * n_values)
        lines = [f"domain {name}"]
        for i, slot in enumerate(slots):
            vals = " | ".join(pool[i * n_values:(i + 1) * n_values])
            lines.append(f"slot {slot} : {vals}")
        a, b, c = slots
        heads = (f"{intents[0]} ( {a} , {b}* , {c}* )",
                 f"{intents[1]} ( {a} , {c}* )",
                 f"{intents[2]} ( {a} , {b}* )")
        for head, body in zip(heads, bodies):
            lines.append(f"template {head} : {body}")
        grammars.append(parse_grammar("\n".join(lines), source=name))
    return tuple(grammars)


def inject_coined_values(corpus: Corpus, fraction: float, seed: int = 0) -> Corpus:
    """Rewrite a share of lexical slot values to freshly coined non-words.

    Each selected value is swapped consistently in the dialog act and in
    the response, so every rewritten example still has slot error 0.  The
    coined values are unpredictable from context, which turns the chosen
    slots of every domain into copy exercises: the model can only realize
    them by reading the prefix.  Unlike :func:`copy_task_grammars`, the
    surrounding text keeps each domain's natural register, so the copying
    pressure is spread across all template shapes instead of being tied
    to dedicated domains.
    """
    from .dialog_act import _boundary_pattern

    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be between 0 and 1")
    rng = np.random.default_rng(seed)
    out = []
    for ex in corpus:
        taken = {p.value for p in ex.acts.all_pairs()}
        response = ex.response
        acts = []
        touched = False
        for act in ex.acts.acts:
            pairs = []
            for p in act.pairs:
                value = p.value
                if is_lexical_value(value) and rng.random() < fraction:
                    coined = _coined_values(rng, 1)[0]
                    while coined in taken or match_count(coined, response):
                        coined = _coined_values(rng, 1)[0]
                    swapped = _boundary_pattern(value).sub(coined, response, count=1)
                    if swapped != response:
                        taken.add(coined)
                        response = swapped
                        value = coined
                        touched = True
                pairs.append(SlotValuePair(p.name, value))
            acts.append(DialogAct(act.intent, tuple(pairs), act.domain))
        out.append(
            Example(DialogActSet(tuple(acts)), response, ex.domain) if touched else ex
        )
    return Corpus(tuple(out), name=f"{corpus.name}-coined{seed}")
