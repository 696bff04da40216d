"""Writes the expected prompt files checked by tests/prompt_goldens.rs.

The wording here is typed out independently of templates/, so a change to a
template shows up as a golden mismatch instead of silently moving both sides.
Run from this directory: python3 make_goldens.py
"""

ROLE = "You are an expert annotator specializing in emotion recognition."
EMO = "joy"
EMOS = ["anger", "fear", "joy", "sadness", "disgust", "surprise"]
TEXTS = [
    "Just got the job offer I've been waiting months for!!",
    "Stuck in traffic again, third time this week.",
    "My dog keeps stealing socks and honestly it's fine.",
    "Can't believe the {emo} of this game, 100% worth it #winning",
]
SCALES = ["B-1", "OL-1", "B-10", "OL-10", "D-4", "D-10", "B-100", "OL-100"]

D10 = ["extremely", "very", "strongly", "quite", "fairly", "moderately",
       "somewhat", "mildly", "slightly", "barely"]


def scale_block(variant, emo):
    level, top = variant.split("-")
    lines = ["Use the following scale:"]
    if top == "1":
        lines.append("Round to the fourth decimal.")
    if level == "B":
        lines += [top, "0"]
    elif level == "OL":
        lines += [f"{top}: extremely intense {emo}", f"0: Not {emo} at all"]
    elif top == "4":
        for value, word in zip([4, 3, 2, 1], ["extremely", "very", "moderately", "slightly"]):
            lines.append(f"{value}: {word} intense {emo}")
        lines.append(f"0: Not {emo} at all")
    else:
        for value, word in zip(range(10, 0, -1), D10):
            lines.append(f"{value}: {word} intense {emo}")
        lines.append(f"0: Not {emo} at all")
    return "\n".join(lines)


def rating(variant, texts):
    if len(texts) == 1:
        block = f"Text: {texts[0]}"
    else:
        block = "\n".join(f"Text {i}: {t}" for i, t in enumerate(texts, 1))
    return (
        f"Please rate the following text from social media for how intense the authors feels {EMO}.\n\n"
        f"{scale_block(variant, EMO)}\n\n"
        "Only reply with the numerical rating.\n\n"
        f"{block}\n\n"
        "Format your response as:\n"
        f"{EMO} intensity:"
    )


def comparison(texts):
    count = {2: "two", 4: "four"}[len(texts)]
    block = "\n".join(f"Speaker {i}: {t}" for i, t in enumerate(texts, 1))
    return (
        f"Which of the {count} speakers is likely to be the MOST {EMO} and which of the "
        f"{count} speakers is likely to be the LEAST {EMO}?\n\n"
        "Only give the Speaker number. Do not repeat the text content.\n\n"
        f"{block}\n\n"
        "Format your response as:\n"
        f"Most {EMO} Speaker:\nLeast {EMO} Speaker:"
    )


def adapted_comparison(texts):
    block = "\n".join(f"Speaker {i}: {t}" for i, t in enumerate(texts, 1))
    fmt = "\n".join(f"Most {e} Speaker:\nLeast {e} Speaker:" for e in EMOS)
    return (
        f"For each of these emotions: {', '.join(EMOS)}; which of the four speakers is likely "
        "to be the MOST intense and which of the four speakers is likely to be the LEAST intense?\n\n"
        "Only give the Speaker number. Do not repeat the text content.\n\n"
        f"{block}\n\n"
        "Format your response as:\n"
        f"{fmt}"
    )


def adapted_rating(variant, texts):
    block = "\n".join(f"Text {i}: {t}" for i, t in enumerate(texts, 1))
    fmt = "\n".join(f"Text {i} {e} intensity:" for e in EMOS for i in range(1, len(texts) + 1))
    return (
        "Please rate the following texts from social media for how intense the authors feel "
        f"each of these emotions: {', '.join(EMOS)}.\n\n"
        f"{scale_block(variant, 'emotion')}\n\n"
        "Only reply with the numerical ratings.\n\n"
        f"{block}\n\n"
        "Format your response as:\n"
        f"{fmt}"
    )


def write(name, user):
    with open(f"{name}.txt", "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{ROLE}\n{user}\n")


for v in SCALES:
    write(f"rs_{v}", rating(v, TEXTS[:1]))
    write(f"rs_t_{v}", rating(v, TEXTS))
    write(f"adapted_rs_t_{v}", adapted_rating(v, TEXTS))
write("pc", comparison(TEXTS[:2]))
write("bws", comparison(TEXTS))
write("adapted_bws", adapted_comparison(TEXTS))
