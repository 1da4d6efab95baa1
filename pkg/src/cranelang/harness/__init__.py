from cranelang.harness.config import RunConfig
from cranelang.harness.evaluate import Rates, evaluate
from cranelang.harness.train import build_agent, load_agent, run_training
