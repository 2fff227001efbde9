"""Golden 5x7 bitmap font used by the text-drawing filter.

One glyph per printable ASCII character (32-126).  Each glyph is 7 rows of
5 pixels; rows are written as strings with '#' for a set pixel so the table
can be reviewed by eye.  The table is frozen: rendering is byte-exact and
tests assert against glyph bit counts, so edits here change golden outputs.
"""

from __future__ import annotations

GLYPH_WIDTH = 5
GLYPH_HEIGHT = 7
ADVANCE = 6  # glyph cell plus one column of spacing

_GLYPH_ART = {
    " ": ("....." , "....." , "....." , "....." , "....." , "....." , "....."),
    "!": ("..#.." , "..#.." , "..#.." , "..#.." , "..#.." , "....." , "..#.."),
    '"': (".#.#." , ".#.#." , ".#.#." , "....." , "....." , "....." , "....."),
    "#": (".#.#." , ".#.#." , "#####" , ".#.#." , "#####" , ".#.#." , ".#.#."),
    "$": ("..#.." , ".####" , "#.#.." , ".###." , "..#.#" , "####." , "..#.."),
    "%": ("##..." , "##..#" , "...#." , "..#.." , ".#..." , "#..##" , "...##"),
    "&": (".##.." , "#..#." , "#.#.." , ".#..." , "#.#.#" , "#..#." , ".##.#"),
    "'": ("..#.." , "..#.." , ".#..." , "....." , "....." , "....." , "....."),
    "(": ("...#." , "..#.." , ".#..." , ".#..." , ".#..." , "..#.." , "...#."),
    ")": (".#..." , "..#.." , "...#." , "...#." , "...#." , "..#.." , ".#..."),
    "*": ("....." , "..#.." , "#.#.#" , ".###." , "#.#.#" , "..#.." , "....."),
    "+": ("....." , "..#.." , "..#.." , "#####" , "..#.." , "..#.." , "....."),
    ",": ("....." , "....." , "....." , "....." , ".##.." , "..#.." , ".#..."),
    "-": ("....." , "....." , "....." , "#####" , "....." , "....." , "....."),
    ".": ("....." , "....." , "....." , "....." , "....." , ".##.." , ".##.."),
    "/": ("....." , "....#" , "...#." , "..#.." , ".#..." , "#...." , "....."),
    "0": (".###." , "#...#" , "#..##" , "#.#.#" , "##..#" , "#...#" , ".###."),
    "1": ("..#.." , ".##.." , "..#.." , "..#.." , "..#.." , "..#.." , ".###."),
    "2": (".###." , "#...#" , "....#" , "...#." , "..#.." , ".#..." , "#####"),
    "3": ("#####" , "...#." , "..#.." , "...#." , "....#" , "#...#" , ".###."),
    "4": ("...#." , "..##." , ".#.#." , "#..#." , "#####" , "...#." , "...#."),
    "5": ("#####" , "#...." , "####." , "....#" , "....#" , "#...#" , ".###."),
    "6": ("..##." , ".#..." , "#...." , "####." , "#...#" , "#...#" , ".###."),
    "7": ("#####" , "....#" , "...#." , "..#.." , ".#..." , ".#..." , ".#..."),
    "8": (".###." , "#...#" , "#...#" , ".###." , "#...#" , "#...#" , ".###."),
    "9": (".###." , "#...#" , "#...#" , ".####" , "....#" , "...#." , ".##.."),
    ":": ("....." , ".##.." , ".##.." , "....." , ".##.." , ".##.." , "....."),
    ";": ("....." , ".##.." , ".##.." , "....." , ".##.." , "..#.." , ".#..."),
    "<": ("...#." , "..#.." , ".#..." , "#...." , ".#..." , "..#.." , "...#."),
    "=": ("....." , "....." , "#####" , "....." , "#####" , "....." , "....."),
    ">": (".#..." , "..#.." , "...#." , "....#" , "...#." , "..#.." , ".#..."),
    "?": (".###." , "#...#" , "....#" , "...#." , "..#.." , "....." , "..#.."),
    "@": (".###." , "#...#" , "....#" , ".##.#" , "#.#.#" , "#.#.#" , ".###."),
    "A": (".###." , "#...#" , "#...#" , "#####" , "#...#" , "#...#" , "#...#"),
    "B": ("####." , "#...#" , "#...#" , "####." , "#...#" , "#...#" , "####."),
    "C": (".###." , "#...#" , "#...." , "#...." , "#...." , "#...#" , ".###."),
    "D": ("###.." , "#..#." , "#...#" , "#...#" , "#...#" , "#..#." , "###.."),
    "E": ("#####" , "#...." , "#...." , "####." , "#...." , "#...." , "#####"),
    "F": ("#####" , "#...." , "#...." , "####." , "#...." , "#...." , "#...."),
    "G": (".###." , "#...#" , "#...." , "#.###" , "#...#" , "#...#" , ".####"),
    "H": ("#...#" , "#...#" , "#...#" , "#####" , "#...#" , "#...#" , "#...#"),
    "I": (".###." , "..#.." , "..#.." , "..#.." , "..#.." , "..#.." , ".###."),
    "J": ("..###" , "...#." , "...#." , "...#." , "...#." , "#..#." , ".##.."),
    "K": ("#...#" , "#..#." , "#.#.." , "##..." , "#.#.." , "#..#." , "#...#"),
    "L": ("#...." , "#...." , "#...." , "#...." , "#...." , "#...." , "#####"),
    "M": ("#...#" , "##.##" , "#.#.#" , "#.#.#" , "#...#" , "#...#" , "#...#"),
    "N": ("#...#" , "#...#" , "##..#" , "#.#.#" , "#..##" , "#...#" , "#...#"),
    "O": (".###." , "#...#" , "#...#" , "#...#" , "#...#" , "#...#" , ".###."),
    "P": ("####." , "#...#" , "#...#" , "####." , "#...." , "#...." , "#...."),
    "Q": (".###." , "#...#" , "#...#" , "#...#" , "#.#.#" , "#..#." , ".##.#"),
    "R": ("####." , "#...#" , "#...#" , "####." , "#.#.." , "#..#." , "#...#"),
    "S": (".####" , "#...." , "#...." , ".###." , "....#" , "....#" , "####."),
    "T": ("#####" , "..#.." , "..#.." , "..#.." , "..#.." , "..#.." , "..#.."),
    "U": ("#...#" , "#...#" , "#...#" , "#...#" , "#...#" , "#...#" , ".###."),
    "V": ("#...#" , "#...#" , "#...#" , "#...#" , "#...#" , ".#.#." , "..#.."),
    "W": ("#...#" , "#...#" , "#...#" , "#.#.#" , "#.#.#" , "#.#.#" , ".#.#."),
    "X": ("#...#" , "#...#" , ".#.#." , "..#.." , ".#.#." , "#...#" , "#...#"),
    "Y": ("#...#" , "#...#" , "#...#" , ".#.#." , "..#.." , "..#.." , "..#.."),
    "Z": ("#####" , "....#" , "...#." , "..#.." , ".#..." , "#...." , "#####"),
    "[": (".###." , ".#..." , ".#..." , ".#..." , ".#..." , ".#..." , ".###."),
    "\\": ("....." , "#...." , ".#..." , "..#.." , "...#." , "....#" , "....."),
    "]": (".###." , "...#." , "...#." , "...#." , "...#." , "...#." , ".###."),
    "^": ("..#.." , ".#.#." , "#...#" , "....." , "....." , "....." , "....."),
    "_": ("....." , "....." , "....." , "....." , "....." , "....." , "#####"),
    "`": (".#..." , "..#.." , "...#." , "....." , "....." , "....." , "....."),
    "a": ("....." , "....." , ".###." , "....#" , ".####" , "#...#" , ".####"),
    "b": ("#...." , "#...." , "####." , "#...#" , "#...#" , "#...#" , "####."),
    "c": ("....." , "....." , ".###." , "#...." , "#...." , "#...#" , ".###."),
    "d": ("....#" , "....#" , ".####" , "#...#" , "#...#" , "#...#" , ".####"),
    "e": ("....." , "....." , ".###." , "#...#" , "#####" , "#...." , ".###."),
    "f": ("..##." , ".#..#" , ".#..." , "###.." , ".#..." , ".#..." , ".#..."),
    "g": ("....." , ".####" , "#...#" , "#...#" , ".####" , "....#" , ".###."),
    "h": ("#...." , "#...." , "####." , "#...#" , "#...#" , "#...#" , "#...#"),
    "i": ("..#.." , "....." , ".##.." , "..#.." , "..#.." , "..#.." , ".###."),
    "j": ("...#." , "....." , "..##." , "...#." , "...#." , "#..#." , ".##.."),
    "k": ("#...." , "#...." , "#..#." , "#.#.." , "##..." , "#.#.." , "#..#."),
    "l": (".##.." , "..#.." , "..#.." , "..#.." , "..#.." , "..#.." , ".###."),
    "m": ("....." , "....." , "##.#." , "#.#.#" , "#.#.#" , "#.#.#" , "#.#.#"),
    "n": ("....." , "....." , "####." , "#...#" , "#...#" , "#...#" , "#...#"),
    "o": ("....." , "....." , ".###." , "#...#" , "#...#" , "#...#" , ".###."),
    "p": ("....." , "####." , "#...#" , "#...#" , "####." , "#...." , "#...."),
    "q": ("....." , ".####" , "#...#" , "#...#" , ".####" , "....#" , "....#"),
    "r": ("....." , "....." , "#.##." , "##..#" , "#...." , "#...." , "#...."),
    "s": ("....." , "....." , ".####" , "#...." , ".###." , "....#" , "####."),
    "t": (".#..." , ".#..." , "###.." , ".#..." , ".#..." , ".#..#" , "..##."),
    "u": ("....." , "....." , "#...#" , "#...#" , "#...#" , "#..##" , ".##.#"),
    "v": ("....." , "....." , "#...#" , "#...#" , "#...#" , ".#.#." , "..#.."),
    "w": ("....." , "....." , "#...#" , "#...#" , "#.#.#" , "#.#.#" , ".#.#."),
    "x": ("....." , "....." , "#...#" , ".#.#." , "..#.." , ".#.#." , "#...#"),
    "y": ("....." , "#...#" , "#...#" , "#...#" , ".####" , "....#" , ".###."),
    "z": ("....." , "....." , "#####" , "...#." , "..#.." , ".#..." , "#####"),
    "{": ("...#." , "..#.." , "..#.." , ".#..." , "..#.." , "..#.." , "...#."),
    "|": ("..#.." , "..#.." , "..#.." , "..#.." , "..#.." , "..#.." , "..#.."),
    "}": (".#..." , "..#.." , "..#.." , "...#." , "..#.." , "..#.." , ".#..."),
    "~": ("....." , "....." , ".#..." , "#.#.#" , "...#." , "....." , "....."),
}


def _compile(art):
    rows = []
    for row in art:
        assert len(row) == GLYPH_WIDTH
        bits = 0
        for ch in row:
            bits = (bits << 1) | (ch == "#")
        rows.append(bits)
    return tuple(rows)


# char -> 7 row bitmaps, bit (GLYPH_WIDTH-1-x) set means pixel x is on.
GLYPHS = {ch: _compile(art) for ch, art in _GLYPH_ART.items()}

REPLACEMENT = "?"


def glyph_rows(ch: str):
    """Row bitmaps for a character; non-printable ASCII maps to '?'."""
    return GLYPHS.get(ch, GLYPHS[REPLACEMENT])


def glyph_pixel_count(ch: str) -> int:
    return sum(bin(r).count("1") for r in glyph_rows(ch))
