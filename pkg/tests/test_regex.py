"""The pattern engine is checked against Python's ``re`` (ASCII mode) as an independent reference."""

import random

import pytest

from helpers import reference
from tcme._regex import Regex, RegexError, parse_class

ATOMS = ["a", "b", "c", "0", "1", " ", "-", ".", "\\d", "\\w", "\\s", "\\D", "\\.", "\\-", "\\n",
         "[abc]", "[^a]", "[a-c0-9]", "[[:digit:]]", "[[:alpha:]x]", "[^[:space:]]", "[[:punct:]]", "[\\d_]"]


def random_pattern(rng: random.Random, depth: int = 0) -> str:
    roll = rng.random()
    if depth > 2 or roll < 0.35:
        node = rng.choice(ATOMS)
    elif roll < 0.6:
        node = "".join(random_pattern(rng, depth + 1) for _ in range(rng.randrange(1, 4)))
    elif roll < 0.8:
        node = "(?:" + "|".join(random_pattern(rng, depth + 1) for _ in range(rng.randrange(2, 4))) + ")"
    else:
        node = "(" + random_pattern(rng, depth + 1) + ")"
    q = rng.random()
    if q < 0.15:
        node = f"(?:{node})*"
    elif q < 0.25:
        node = f"(?:{node})+"
    elif q < 0.35:
        node = f"(?:{node})?"
    elif q < 0.45:
        lo = rng.randrange(0, 3)
        hi = lo + rng.randrange(0, 3)
        node = f"(?:{node}){{{lo},{hi}}}" if rng.random() < 0.7 else f"(?:{node}){{{lo}}}"
    return node


def random_text(rng: random.Random) -> str:
    alphabet = "abc01 -._\n\tZ!é"
    return "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 8)))


def test_agrees_with_re_on_random_patterns():
    rng = random.Random(11)
    checked = 0
    for _ in range(300):
        pattern = random_pattern(rng)
        engine = Regex(pattern)
        for _ in range(40):
            text = random_text(rng)
            assert engine.fullmatch(text) == reference(pattern, text), (pattern, text)
            checked += 1
    assert checked == 12_000


@pytest.mark.parametrize(
    "pattern, yes, no",
    [
        ("abc", ["abc"], ["ab", "abcd", " abc"]),
        ("a|bc", ["a", "bc"], ["abc", ""]),
        ("(?:ab)*", ["", "ab", "abab"], ["aba"]),
        ("a{2,3}", ["aa", "aaa"], ["a", "aaaa"]),
        ("a{2,}", ["aa", "aaaaaa"], ["a"]),
        ("a{0}", [""], ["a"]),
        ("^YES$", ["YES"], ["YES\n", "yes"]),
        ("[[:upper:]]{2,5}", ["AB", "ABCDE"], ["A", "ABCDEF", "Ab"]),
        ("\\d+\\.\\d{2}", ["3.14", "10.00"], ["3.1", ".14", "3,14"]),
        ("[^\\n]*", ["anything goes", ""], ["two\nlines"]),
        ("\\$\\^", ["$^"], [""]),
        (".", ["x", "é"], ["\n", ""]),
        ("[]a]", ["]", "a"], ["b"]),
        ("[a-]", ["a", "-"], ["b"]),
    ],
)
def test_examples(pattern, yes, no):
    r = Regex(pattern)
    for text in yes:
        assert r.fullmatch(text), text
        assert reference(pattern, text)
    for text in no:
        assert not r.fullmatch(text), text
        assert not reference(pattern, text)


@pytest.mark.parametrize(
    "bad",
    ["(a", "a)", "*a", "a**", "a{2}{3}", "[a", "[z-a]", "(a)\\1", "(?=a)", "(?!a)", "a+?", "a{2,1}", "a{1001}", "a^b",
     "[[:nope:]]", "\\q", "é", "a\tb"],
)
def test_rejects_non_regular_or_malformed(bad):
    with pytest.raises(RegexError):
        Regex(bad)


def test_long_inputs_are_linear():
    r = Regex("(?:a|aa)*b")
    assert not r.fullmatch("a" * 5000)
    assert r.fullmatch("a" * 5000 + "b")


def test_parse_class():
    cs = parse_class("[[:print:]\\n]")
    assert "a" in cs and "\n" in cs and "~" in cs
    assert "\t" not in cs and "é" not in cs
    neg = parse_class("[^0-9]")
    assert "5" not in neg and "x" in neg
    for bad in ["abc", "[abc", "[a]b"]:
        with pytest.raises(RegexError):
            parse_class(bad)
