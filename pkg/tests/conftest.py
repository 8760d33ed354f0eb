import pytest

from icr.prompt_layout import Document, ModelProfile, Query
from icr.tokenizers import WhitespaceTokenizer


@pytest.fixture
def profile():
    return ModelProfile(
        name="toy", layers=2, heads=2, tokenizer=WhitespaceTokenizer()
    )


@pytest.fixture
def docs():
    return [
        Document(id="d1", text="the cat sat on the mat"),
        Document(id="d2", text="dogs chase cats around the yard"),
        Document(id="d3", text="rivers flow down to the sea"),
        Document(id="d4", text="bread needs flour water and salt"),
    ]


@pytest.fixture
def query():
    return Query(text="where do rivers go")

