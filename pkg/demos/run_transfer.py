"""
Clean pretraining, noisy fine-tuning
====================================

A shortened version of the transfer experiment. Pass the number of epochs per
phase as the first argument (the acceptance suite uses 30).
"""
import sys
import tempfile
from pathlib import Path

from rivetkey.metrics import evaluate
from rivetkey.model import ModelConfig
from rivetkey.phantom import generate_dataset
from rivetkey.train import finetune_config, predict, pretrain_config, run_phase

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 5
root = Path(tempfile.mkdtemp(prefix="rivetkey_demo_"))

clean_train = generate_dataset(200, "clean", 1, root / "clean_train")
noisy_train = generate_dataset(40, "noisy", 2, root / "noisy_train")
noisy_test = generate_dataset(40, "noisy", 3, root / "noisy_test")

###############################################################################
# Pretrain on clean phantoms, then continue on the small noisy set. The
# scratch baseline sees only the noisy set.
pre = run_phase(None, clean_train, pretrain_config(epochs), "pretrain", ModelConfig())
tuned = run_phase(pre, noisy_train, finetune_config(epochs), "finetune")
scratch = run_phase(None, noisy_train, finetune_config(epochs), "scratch", ModelConfig())

for name, ckpt in (("pretrained only", pre), ("fine-tuned", tuned), ("scratch", scratch)):
    r = evaluate(predict(ckpt, noisy_test), noisy_test)
    print(f"{name:<16} {r.table_row()}")
