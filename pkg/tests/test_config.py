import pytest

from sosecure.config import AppConfig, ConfigError, load_config


def test_defaults():
    cfg = load_config(None)
    assert cfg.k == 3 and cfg.llm.temperature == 0.0 and cfg.bm25.k1 == 1.5
    assert cfg.analyzers["python"].name == "bandit"


def test_full_file(tmp_path):
    (tmp_path / "conf.toml").write_text("""
[paths]
kb = "data/kb.jsonl"
index = "/abs/index.jsonl"

[bm25]
k1 = 1.2
b = 0.5
split_identifiers = true

[retrieval]
k = 5

[llm]
model = "local-model"
base_url = "http://localhost:8000/v1"
retries = 0

[analyzer.c]
name = "cppcheck-sarif"
commands = ["tool-a {input_dir}", "tool-b {output_sarif}"]
min_level = "warning"

[jobs]
samples = 4

[eval]
trust_labels = true
""")
    cfg = load_config(tmp_path / "conf.toml")
    assert cfg.kb_path == tmp_path / "data" / "kb.jsonl"
    assert str(cfg.index_path) == "/abs/index.jsonl"
    assert (cfg.bm25.k1, cfg.bm25.b, cfg.bm25.split_identifiers) == (1.2, 0.5, True)
    assert cfg.k == 5 and cfg.jobs == 4 and cfg.trust_labels
    assert cfg.llm.model == "local-model" and cfg.llm.retries == 0
    assert cfg.analyzers["c"].commands == ["tool-a {input_dir}", "tool-b {output_sarif}"]
    assert "python" in cfg.analyzers


@pytest.mark.parametrize("text,msg", [
    ('[llm]\napi_key = "sk-123"\n', "SOSECURE_API_KEY"),
    ("[retrieval]\nk = 0\n", "k must be"),
    ("[bm25]\nk3 = 1\n", "unknown keys"),
    ('[paths]\nkbb = "x"\n', "unknown keys"),
    ("[analyzer.python]\nname = 'x'\n", "commands"),
    ("[llm]\ntemperature = 3.0\n", "temperature"),
    ("not toml = = =", "conf.toml"),
])
def test_bad_config(tmp_path, text, msg):
    (tmp_path / "conf.toml").write_text(text)
    with pytest.raises(ConfigError, match=msg):
        load_config(tmp_path / "conf.toml")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.toml")


def test_app_config_validates():
    with pytest.raises(ConfigError):
        AppConfig(jobs=0)
