import json

from prepost import corpus
from prepost.bench import overhead
from prepost.dsl import parse_program


def test_collector_small():
    s = overhead(parse_program(corpus.generate("collector", 5)))
    assert (s.status, s.thread_count, s.message_count) == ("COMPLETED", 6, 5)
    assert (s.prepost.per_message_words, s.prepost.total_words, s.prepost.extra_links) == (1, 5, 0)
    assert (s.vclock.per_message_words, s.vclock.total_words, s.vclock.extra_links) == (6, 30, 5)


def test_closed_receive_is_not_a_message():
    prog = parse_program("x := makeChan\nclose(x)\ny := <-x\n")
    s = overhead(prog)
    assert s.message_count == 0 and s.vclock.total_words == 0


def test_buffered_messages_counted():
    s = overhead(corpus.load("buffered2"), 0)
    assert s.message_count == 1


def test_json_and_text():
    s = overhead(corpus.load("fig1"))
    doc = json.loads(s.to_json())
    assert doc["messages"] == s.message_count == 3
    assert doc["vclock"]["per_message_words"] == s.thread_count
    text = s.to_text()
    assert "pre/post" in text and "vclock" in text
