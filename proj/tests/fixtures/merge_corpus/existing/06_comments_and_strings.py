# Module comment.
import re

PATTERN = re.compile(r"\d+")  # digits

SAMPLE = """line one
def not_a_function():
    pass
"""


class TestRegex:
    # A comment inside the class.
    def test_findall(self):
        assert PATTERN.findall("a1b22") == ["1", "22"]

    def test_sample_lines(self):
        assert len(SAMPLE.splitlines()) == 3
