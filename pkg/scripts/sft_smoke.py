"""Fine-tune the tiny byte-level model on synthetic tagged responses and report the NLL drop."""
import argparse

from faithcheck.core import SynthRecord, serialize_tagged
from faithcheck.gateway import TinyLM
from faithcheck.sft import SftConfig, train_sft
from faithcheck.synthetic import make_samples

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--records", type=int, default=64)
    ap.add_argument("--epochs", type=int, default=3)
    ap.add_argument("--lr", type=float, default=3e-3)
    ap.add_argument("--out", default=None, help="optional checkpoint directory")
    a = ap.parse_args()

    records = [
        SynthRecord.from_raw(s, serialize_tagged(
            "Compare the claim with the document.",
            "The claim matches the document." if s.label else "The document does not support the claim.",
            s.answer_text), "smoke")
        for s in make_samples(a.records, seed=3)
    ]
    _, m = train_sft(TinyLM(), records, SftConfig(learning_rate=a.lr, batch_size=8, epochs=a.epochs), a.out)
    print(f"mean target NLL {m['initial_nll']:.3f} -> {m['final_nll']:.3f} "
          f"({100 * (1 - m['final_nll'] / m['initial_nll']):.1f}% lower) over {len(m['steps'])} steps")
