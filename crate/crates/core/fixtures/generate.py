"""Generates the scripted self-play fixtures.

Writes rules.toml (scripted language model), manifest.json (five cases
with inline ground-truth graphs) and expected.json (initial NLL per case,
computed here independently of the Rust implementation).

Every uncertain item in a starting belief is a ground-truth fact, and every
answer adds that fact's statement to the prompt, so a strategy that asks
about each fact ends at NLL 0.

Run: python3 generate.py
"""

import itertools
import json
import math
from pathlib import Path

HERE = Path(__file__).resolve().parent

FILLER_Q = "Is there anything else you would like to add?"
FILLER_A = "No, that is everything."
FILLER_S = "The user has nothing more to add."


def ent(name, kind, p, imp, desc, attrs=(), exists=True):
    return dict(name=name, kind=kind, p=p, imp=imp, desc=desc, attrs=list(attrs), exists=exists)


def attr(name, imp, prior, truth):
    return dict(name=name, imp=imp, prior=prior, truth=truth)


def rel(e1, e2, imp, prior, truth, desc=""):
    return dict(e1=e1, e2=e2, imp=imp, prior=prior, truth=truth, desc=desc)


CASES = [
    dict(
        case_id="pets-01",
        p0="a rabbit and a cat",
        caption="A watercolor painting of a white rabbit sitting to the left of a ginger cat.",
        entities=[
            ent("rabbit", "explicit", 1.0, 0.9, "a rabbit",
                [attr("color", 0.9, {"white": 0.4, "brown": 0.3, "grey": 0.3}, "white")]),
            ent("cat", "explicit", 1.0, 0.8, "a cat",
                [attr("color", 0.8, {"black": 0.5, "ginger": 0.3, "tabby": 0.2}, "ginger")]),
            ent("image style", "background", 1.0, 1.0, "the style of the image",
                [attr("style", 1.0, {"photograph": 0.5, "watercolor": 0.3, "cartoon": 0.2}, "watercolor")]),
        ],
        relations=[rel("rabbit", "cat", 0.5, {"left of": 0.4, "right of": 0.4, "behind": 0.2}, "left of")],
        questions={
            ("rabbit", "color"): "What color is the rabbit?",
            ("cat", "color"): "What color is the cat?",
            ("image style", "style"): "What style should the image have?",
            "rabbit-cat": "Where is the rabbit relative to the cat?",
        },
    ),
    dict(
        case_id="breakfast-02",
        p0="breakfast on a table",
        caption="A photograph of an Indian breakfast on a marble table, with a fork lying on the table.",
        entities=[
            ent("breakfast", "explicit", 1.0, 0.9, "a breakfast",
                [attr("cuisine", 0.9, {"English": 0.4, "Indian": 0.3, "American": 0.3}, "Indian")]),
            ent("table", "explicit", 1.0, 0.6, "a table",
                [attr("material", 0.6, {"wood": 0.6, "marble": 0.2, "glass": 0.2}, "marble")]),
            ent("fork", "implicit", 0.6, 0.7, "a fork for eating"),
            ent("image style", "background", 1.0, 1.0, "the style of the image",
                [attr("style", 1.0, {"photograph": 0.6, "oil painting": 0.4}, "photograph")]),
        ],
        relations=[
            rel("breakfast", "table", 0.2, {"on": 1.0}, "on", "breakfast served on the table"),
            rel("fork", "table", 0.4, {"beside": 0.5, "on": 0.5}, "on"),
        ],
        questions={
            ("breakfast", "cuisine"): "What cuisine is the breakfast?",
            ("table", "material"): "What material is the table made of?",
            "fork": "Is there a fork in the image?",
            ("image style", "style"): "What style should the image have?",
            "fork-table": "Where is the fork relative to the table?",
        },
    ),
    dict(
        case_id="lighthouse-03",
        p0="a lighthouse on a cliff",
        caption="An oil painting of a red and white lighthouse on a cliff at sunset, with an empty sea and no boats.",
        entities=[
            ent("lighthouse", "explicit", 1.0, 0.9, "a lighthouse",
                [attr("color", 0.8, {"white": 0.5, "red and white": 0.3, "grey": 0.2}, "red and white")]),
            ent("cliff", "explicit", 1.0, 0.4, "a cliff"),
            ent("boat", "implicit", 0.4, 0.6, "a boat on the sea", exists=False),
            ent("sky", "background", 1.0, 0.7, "the sky",
                [attr("time of day", 0.7, {"noon": 0.4, "sunset": 0.4, "night": 0.2}, "sunset")]),
            ent("image style", "background", 1.0, 1.0, "the style of the image",
                [attr("style", 1.0, {"oil painting": 0.5, "photograph": 0.3, "sketch": 0.2}, "oil painting")]),
        ],
        relations=[rel("lighthouse", "cliff", 0.2, {"on": 1.0}, "on", "the lighthouse stands on the cliff")],
        questions={
            ("lighthouse", "color"): "What color is the lighthouse?",
            "boat": "Is there a boat in the image?",
            ("sky", "time of day"): "What time of day is it?",
            ("image style", "style"): "What style should the image have?",
        },
    ),
    dict(
        case_id="robot-04",
        p0="a robot in a kitchen",
        caption="A 3d render of a small yellow robot standing in front of a window in a rustic kitchen.",
        entities=[
            ent("robot", "explicit", 1.0, 0.9, "a robot",
                [attr("color", 0.8, {"silver": 0.5, "white": 0.3, "yellow": 0.2}, "yellow"),
                 attr("size", 0.6, {"large": 0.5, "small": 0.5}, "small")]),
            ent("kitchen", "explicit", 1.0, 0.7, "a kitchen",
                [attr("decor", 0.7, {"modern": 0.7, "rustic": 0.3}, "rustic")]),
            ent("window", "implicit", 0.5, 0.5, "a kitchen window"),
            ent("image style", "background", 1.0, 1.0, "the style of the image",
                [attr("style", 1.0, {"3d render": 0.6, "photograph": 0.4}, "3d render")]),
        ],
        relations=[rel("robot", "window", 0.4, {"in front of": 0.6, "beside": 0.4}, "in front of")],
        questions={
            ("robot", "color"): "What color is the robot?",
            ("robot", "size"): "How big is the robot?",
            ("kitchen", "decor"): "How is the kitchen decorated?",
            "window": "Is there a window in the image?",
            ("image style", "style"): "What style should the image have?",
            "robot-window": "Where is the robot relative to the window?",
        },
    ),
    dict(
        case_id="flowers-05",
        p0="flowers in a vase",
        caption="A still life painting of yellow tulips in a ceramic vase.",
        entities=[
            ent("flowers", "explicit", 1.0, 0.9, "flowers",
                [attr("type", 0.9, {"roses": 0.5, "tulips": 0.3, "daisies": 0.2}, "tulips"),
                 attr("color", 0.7, {"red": 0.4, "yellow": 0.3, "pink": 0.3}, "yellow")]),
            ent("vase", "explicit", 1.0, 0.6, "a vase",
                [attr("material", 0.6, {"glass": 0.5, "ceramic": 0.5}, "ceramic")]),
            ent("image style", "background", 1.0, 1.0, "the style of the image",
                [attr("style", 1.0, {"photograph": 0.5, "still life painting": 0.5}, "still life painting")]),
        ],
        relations=[rel("flowers", "vase", 0.2, {"in": 1.0}, "in", "flowers standing in the vase")],
        questions={
            ("flowers", "type"): "What type of flowers are they?",
            ("flowers", "color"): "What color are the flowers?",
            ("vase", "material"): "What is the vase made of?",
            ("image style", "style"): "What style should the image have?",
        },
    ),
]


def rx(text):
    """Escapes regex metacharacters (only those, so the pattern stays readable)."""
    return "".join("\\" + c if c in "\\.+*?()|[]{}^$#&-~" else c for c in text)


def rel_name(r):
    return f"{r['e1']}-{r['e2']}"


def attr_statement(e, a, value):
    return f"the {a} of the {e} is {value}"


def rel_statement(r, value):
    return f"the {r['e1']} is {value} the {r['e2']}"


def exist_statement(e, exists):
    return f"there is a {e} in the image" if exists else f"there is no {e} in the image"


def uncertain(prior):
    return len(prior) > 1


def facts(case):
    """(key, question, answer, statement) for every uncertain ground-truth fact."""
    out = []
    qs = case["questions"]
    for e in case["entities"]:
        if e["p"] not in (0.0, 1.0):
            out.append((e["name"], qs[e["name"]], "yes" if e["exists"] else "no", exist_statement(e["name"], e["exists"])))
        for a in e["attrs"]:
            if uncertain(a["prior"]):
                key = (e["name"], a["name"])
                out.append((key, qs[key], a["truth"], attr_statement(e["name"], a["name"], a["truth"])))
    for r in case["relations"]:
        if uncertain(r["prior"]):
            out.append((rel_name(r), qs[rel_name(r)], r["truth"], rel_statement(r, r["truth"])))
    assert set(k for k, *_ in out) == set(qs), case["case_id"]
    return out


def prompt_field(p0, fact=None):
    inner = rx(p0) + '[^"]*' + (rx(fact) + '[^"]*' if fact else "")
    return '"user_prompt": "' + inner + '"'


ENTITY_HEAD = r"Identify the entities given the input given below\.[^\n]*\nInput: \{\n  "
ATTR_HEAD = r"Generate attributes given the input given below\.[^\n]*\nInput: \{\n  "
REL_HEAD = r"Identify relationships between entities given the input given below\.[^\n]*\nInput: \{\n  "


def conditional_rules(head, tail, p0, statements, build):
    """One rule per subset of `statements` present in the prompt."""
    rules = []
    for mask in itertools.product([False, True], repeat=len(statements)):
        present = [s for s, m in zip(statements, mask) if m]
        absent = [s for s, m in zip(statements, mask) if not m]
        matchers = [head + prompt_field(p0) + tail] + [head + prompt_field(p0, s) + tail for s in present]
        unless = [head + prompt_field(p0, s) + tail for s in absent]
        rules.append(dict(matcher=matchers, unless=unless, response=json.dumps(build(set(present)))))
    return rules


def case_rules(case):
    p0 = case["p0"]
    rules = []

    # Entities: existence statements settle implicit entities.
    uncertain_entities = [e for e in case["entities"] if e["p"] not in (0.0, 1.0)]
    ex_statements = [exist_statement(e["name"], e["exists"]) for e in uncertain_entities]

    def entity_doc(present):
        doc = []
        for e in case["entities"]:
            kind, p, imp = e["kind"], e["p"], e["imp"]
            if exist_statement(e["name"], e["exists"]) in present and e in uncertain_entities:
                p, imp = (1.0, e["imp"]) if e["exists"] else (0.0, 0.0)
                kind = "explicit" if e["exists"] else kind
            doc.append(dict(name=e["name"], importance_to_ask_score=imp, description=e["desc"],
                            entity_type=kind, probability_of_appearing=p))
        return doc

    rules += conditional_rules(ENTITY_HEAD, "", p0, ex_statements, entity_doc)

    # Attributes, one entity at a time.
    for e in case["entities"]:
        tail = r',\n  "entity": "' + rx(e["name"]) + '"'
        changing = [a for a in e["attrs"] if uncertain(a["prior"])]
        statements = [attr_statement(e["name"], a["name"], a["truth"]) for a in changing]

        def attr_doc(present, e=e):
            doc = []
            for a in e["attrs"]:
                if attr_statement(e["name"], a["name"], a["truth"]) in present:
                    doc.append(dict(name=a["name"], importance_to_ask_score=0.1, candidates={a["truth"]: 1.0}))
                else:
                    doc.append(dict(name=a["name"], importance_to_ask_score=a["imp"], candidates=a["prior"]))
            return doc

        rules += conditional_rules(ATTR_HEAD, tail, p0, statements, attr_doc)

    # Relations.
    changing = [r for r in case["relations"] if uncertain(r["prior"])]
    statements = [rel_statement(r, r["truth"]) for r in changing]

    def rel_doc(present):
        doc = []
        for r in case["relations"]:
            settled = rel_statement(r, r["truth"]) in present
            doc.append(dict(name=rel_name(r), description=r["desc"],
                            spatial_relation={r["truth"]: 1.0} if settled else r["prior"],
                            importance_to_ask_score=0.1 if settled else r["imp"],
                            name_entity_1=r["e1"], name_entity_2=r["e2"], is_bidirectional=False))
        return doc

    rules += conditional_rules(REL_HEAD, "", p0, statements, rel_doc)

    fs = facts(case)

    # Scored questions, simulated answers and summaries.
    for key, q, a, s in fs:
        if isinstance(key, tuple):
            head = f"Example5:\nentity: {key[0]}\nattribute: {key[1]}\n"
        elif "-" in key and key not in [e["name"] for e in case["entities"]]:
            head = f"Example5:\nentity: {key}\nattribute: spatial relation\n"
        else:
            head = f"Example5:\nentity: {key}\nattribute: existence\n"
        rules.append(dict(matcher=rx(head), unless=[], response=q))

    # Free-form questions, asked in fact order, then the filler question.
    first = fs[0][1]
    rules.append(dict(matcher=r"The original prompt was: " + rx(p0) + r" - Based on", unless=[],
                      response=f"<question>{first}</question>"))
    history = r"<chat_history>\noriginal prompt: " + rx(p0) + r"\n"
    for (_, prev, _, _), (_, nxt, _, _) in zip(fs, fs[1:]):
        rules.append(dict(matcher=[history, r"agent: " + rx(prev) + r"\n"],
                          unless=[r"agent: " + rx(nxt) + r"\n"],
                          response=f"<question>{nxt}</question>"))
    rules.append(dict(matcher=[history, r"agent: " + rx(fs[-1][1]) + r"\n"], unless=[],
                      response=f"<question>{FILLER_Q}</question>"))

    rules.append(dict(matcher=r"Caption: " + rx(case["caption"]) + r"\nShort prompt:", unless=[], response=p0))
    return rules, fs


def shared_answer_rules(all_facts):
    """Question-keyed rules; questions shared between cases have one answer only when the answers agree."""
    by_q = {}
    for q, a, s in all_facts:
        by_q.setdefault(q, set()).add((a, s))
    rules = []
    for q, pairs in sorted(by_q.items()):
        if len(pairs) == 1:
            (a, s), = pairs
            rules.append(dict(matcher=r"Agent question: " + rx(q) + r"\nYour answer:", unless=[], response=a))
            rules.append(dict(matcher=r"question: " + rx(q) + r" and answer: ", unless=[], response=s))
        else:
            # Same question, different truths: key on the user's image and the answer.
            for a, s in sorted(pairs):
                rules.append(dict(matcher=r"question: " + rx(q) + r" and answer: " + rx(a) + r"\.\n",
                                  unless=[], response=s))
            # Answers outside the fixture world still summarize to a statement.
            a, s = sorted(pairs)[0]
            if a in s:
                rules.append(dict(matcher=r"question: " + rx(q) + r" and answer: (.+?)\.\n",
                                  unless=[], response=s.replace(a, "$1")))
    return rules, {q for q, p in by_q.items() if len(p) > 1}


def graph_doc(case):
    entities = []
    for e in case["entities"]:
        entities.append(dict(
            name=e["name"],
            importance_to_ask_score=e["imp"] if e["exists"] else 0.0,
            description=e["desc"],
            entity_type="explicit" if e["kind"] == "implicit" else e["kind"],
            probability_of_appearing=1.0 if e["exists"] else 0.0,
            attributes=[dict(name=a["name"], importance_to_ask_score=0.0, candidates={a["truth"]: 1.0})
                        for a in e["attrs"]] if e["exists"] else [],
        ))
    relations = [dict(name=rel_name(r), description=r["desc"], spatial_relation={r["truth"]: 1.0},
                      importance_to_ask_score=0.0, name_entity_1=r["e1"], name_entity_2=r["e2"],
                      is_bidirectional=False) for r in case["relations"]]
    return dict(source_prompt=case["caption"], entities=entities, relations=relations)


def initial_nll(case):
    """-ln of each ground-truth fact under the starting belief; certain facts add 0."""
    total = 0.0
    for e in case["entities"]:
        total += -math.log(max(e["p"] if e["exists"] else 1.0 - e["p"], 1e-4))
        if not e["exists"]:
            continue
        for a in e["attrs"]:
            total += -math.log(max(a["prior"][a["truth"]], 1e-4))
    for r in case["relations"]:
        total += -math.log(max(r["prior"][r["truth"]], 1e-4))
    return max(total, 0.0)


def toml_value(v):
    if isinstance(v, list):
        return "[" + ", ".join(json.dumps(x) for x in v) + "]"
    return json.dumps(v)


def main():
    rules = []
    all_facts = []
    expected = {}
    for case in CASES:
        r, fs = case_rules(case)
        rules += r
        all_facts += [(q, a, s) for _, q, a, s in fs]
        expected[case["case_id"]] = dict(initial_nll=initial_nll(case), facts=len(fs),
                                         questions=[q for _, q, _, _ in fs])
    answer_rules, shared = shared_answer_rules(all_facts)
    # Shared questions need the simulated user to look at the image they hold.
    for case in CASES:
        for _, q, a, s in facts(case):
            if q in shared:
                rules.append(dict(
                    matcher=[r"Agent question: " + rx(q) + r"\nYour answer:",
                             r"You have the following image in mind: " + rx(case["caption"])],
                    unless=[], response=a))
    rules += answer_rules

    rules.append(dict(matcher=r"Agent question: " + rx(FILLER_Q) + r"\nYour answer:", unless=[], response=FILLER_A))
    rules.append(dict(matcher=r"question: " + rx(FILLER_Q) + r" and answer: ", unless=[], response=FILLER_S))
    rules.append(dict(
        matcher=r"The original prompt is (.*?)\.*\. The user has provided some additional information: " + rx(FILLER_S),
        unless=[], response="${1}"))
    rules.append(dict(
        matcher=r"The original prompt is (.*?)\.*\. The user has provided some additional information: (.*?)\.*\. Please write a new prompt",
        unless=[], response="${1}. ${2}."))

    lines = ["# Generated by generate.py; edit that file instead.",
             'default_response = "I am not sure what you mean."', ""]
    for rule in rules:
        lines.append("[[rule]]")
        lines.append("matcher = " + toml_value(rule["matcher"]))
        if rule["unless"]:
            lines.append("unless = " + toml_value(rule["unless"]))
        lines.append("response = " + toml_value(rule["response"]))
        lines.append("")
    (HERE / "rules.toml").write_text("\n".join(lines))

    manifest = dict(name="scripted-fixtures", source="hand-built scripted world", cases=[
        dict(case_id=c["case_id"], starting_prompt=c["p0"], ground_truth_caption=c["caption"],
             ground_truth_graph=graph_doc(c)) for c in CASES])
    (HERE / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    (HERE / "expected.json").write_text(json.dumps(expected, indent=2) + "\n")


if __name__ == "__main__":
    main()
