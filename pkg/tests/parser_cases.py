"""Messy category-ranking answers and their expected parse.

Each case is ``(response, expected)`` where ``expected`` is the ranked list
of taxonomy names, or an exception class for answers that must be rejected.
"""

from scenefit.errors import UnknownCategory, UnparseableResponse

FED = ["Food", "Electronics", "Drinks"]

CATEGORY_PARSER_CASES = [
    ("Food, Electronics, Drinks", FED),
    ("1. Food\n2. Electronics\n3. Drinks", FED),
    ("1. Food 2. Electronics 3. Drinks.", FED),
    ("(1) Food (2) Electronics (3) Drinks", FED),
    ("- Food\n- Electronics\n- Drinks", FED),
    ("food, ELECTRONICS, drinks.", FED),
    ("**Food**, *Electronics*, `Drinks`", FED),
    ('"Food", "Electronics", "Drinks"', FED),
    ("[Food, Electronics, Drinks]", FED),
    ("Categories: Food, Electronics, Drinks", FED),
    ("Answer: Food; Electronics; and Drinks", FED),
    ("The three most likely categories are: Food, Electronics, or Drinks!", FED),
    ("  Food ,Electronics,   Drinks  \n", FED),
    ("Foods, Electronic, Drink", FED),
    ("1) Cosmetics 2) FMCG 3) Computers", ["Cosmetics", "FMCG", "Computers"]),
    ("Food, Electronics", UnparseableResponse),
    ("Food, Electronics, Drinks, FMCG", UnparseableResponse),
    ("Food, food, Drinks", UnparseableResponse),
    ("", UnparseableResponse),
    ("Food, Electronics, Furniture", UnknownCategory),
]
