"""Run the language-model baseline against the in-process mock server.

Point ``base_url`` at a real chat-completion endpoint (and export the token
variable) to compare against an actual model.

    python demos/04_baseline_with_mock.py
"""

import os

from postocr.corpus import CorrectionPair
from postocr.lm_baseline import CorrectorEndpointConfig, MockConfig, MockLMServer, run_baseline_eval
from postocr.metrics import evaluate_corpus

pairs = [
    CorrectionPair("teh cat sat", "the cat sat"),
    CorrectionPair("0n the mat", "on the mat"),
    CorrectionPair("hello world", "hello world"),
]
os.environ.setdefault("POSTOCR_LM_TOKEN", "not-a-real-token")

print("raw:     ", evaluate_corpus([(p.ocr_text, p.gt_text) for p in pairs], word_level=True).to_json())

# identity mode echoes the input, so it must score exactly like the raw pairs
with MockLMServer(MockConfig("identity")) as server:
    config = CorrectorEndpointConfig(base_url=server.base_url, timeout=5)
    print("identity:", run_baseline_eval(pairs, config).to_json())

# mapping mode fixes the words it knows about
with MockLMServer(MockConfig("mapping", {"teh": "the", "0n": "on"})) as server:
    config = CorrectorEndpointConfig(base_url=server.base_url, timeout=5)
    print("mapping: ", run_baseline_eval(pairs, config).to_json())
    print(f"{len(server.requests)} requests, first prompt:\n{server.requests[0]['body']['messages'][0]['content']}")
