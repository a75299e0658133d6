import pytest
import torch
from transformers import (
    BertConfig,
    BertForNextSentencePrediction,
    BertTokenizerFast,
    GPT2Config,
    GPT2LMHeadModel,
)

WORDS = (
    "[PAD] [UNK] [CLS] [SEP] [MASK] the a an dog cat bird fox ran sat jumped "
    "slept ate quickly slowly house tree river sky sun moon day night story "
    "begins ends here now then what why how is was were it and or but not "
    "very good bad old new i you we don ' t know ok couldn say topic are "
    "changing again about this that . , ? !"
).split()

HIDDEN = 32
MAX_POS = 64


def build_bert(root):
    bert_dir = root / "tiny-bert"
    bert_dir.mkdir()
    vocab_path = bert_dir / "vocab.txt"
    vocab_path.write_text("\n".join(WORDS) + "\n")
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_path), do_lower_case=True)
    config = BertConfig(
        vocab_size=len(WORDS), hidden_size=HIDDEN, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64, max_position_embeddings=MAX_POS,
    )
    torch.manual_seed(1234)
    model = BertForNextSentencePrediction(config)
    model.eval()
    model.save_pretrained(bert_dir)
    tokenizer.save_pretrained(bert_dir)
    return bert_dir


def build_lm(root):
    lm_dir = root / "tiny-lm"
    lm_dir.mkdir()
    vocab_path = lm_dir / "vocab.txt"
    vocab_path.write_text("\n".join(WORDS) + "\n")
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_path), do_lower_case=True)
    config = GPT2Config(
        vocab_size=len(WORDS), n_positions=MAX_POS, n_embd=HIDDEN, n_layer=2,
        n_head=2, bos_token_id=2, eos_token_id=3,
    )
    torch.manual_seed(4321)
    model = GPT2LMHeadModel(config)
    model.eval()
    model.save_pretrained(lm_dir)
    tokenizer.save_pretrained(lm_dir)
    return lm_dir


@pytest.fixture(scope="session")
def tiny_models(tmp_path_factory):
    root = tmp_path_factory.mktemp("models")
    return {"bert": str(build_bert(root)), "lm": str(build_lm(root)),
            "hidden": HIDDEN, "max_pos": MAX_POS}


CORPUS_TEXT = """\
The dog ran to the river. The cat sat here. A bird jumped about the tree.
The sun was very good that day. The moon begins now. The story ends here.

An old fox slept slowly. The new house was not bad. What is this about?
How was the night sky? It was very good. The day begins again now.

Why are you changing the topic? I don't know about that. The bird ate quickly.
A cat and a dog ran about. The tree was old but good. It ends here now.
"""


@pytest.fixture(scope="session")
def corpus_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus") / "text.txt"
    path.write_text(CORPUS_TEXT)
    return str(path)
