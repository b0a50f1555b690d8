"""Write the synthetic inputs that configs/micro.yaml expects."""
import argparse

from faithcheck.synthetic import write_micro_data

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/micro/data")
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    for k, v in write_micro_data(a.out, a.samples, seed=a.seed).items():
        print(f"{k}: {v}")
