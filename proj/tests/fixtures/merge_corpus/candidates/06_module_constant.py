CAND06_LIMIT = 10


def test_cand06_limit():
    assert CAND06_LIMIT > 5
