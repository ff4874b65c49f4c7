#!/usr/bin/env python3
"""
Quick verification test to ensure all modules can be imported.
Run this to verify the installation is correct.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

print("🔍 Testing imports...\n")

try:
    print("   Testing numerics...")
    from dprompt.numerics import Tensor2D, GradTape, RngStream, grad_check
    print("   ✅ Numerics OK")

    print("   Testing attention...")
    from dprompt.attention import AttentionMode, prompt_attention_forward, decompose
    print("   ✅ Attention OK")

    print("   Testing prompting...")
    from dprompt.prompting import build_bank, insert_prompts, assemble_text_input, save_bank
    print("   ✅ Prompting OK")

    print("   Testing toy model...")
    from dprompt.toyvlm import DualEncoder, SyntheticTask, attention_map_distance
    print("   ✅ Toy model OK")

    print("   Testing trainer and reports...")
    from dprompt.trainer import train_prompts, harmonic_mean
    from dprompt.reports import load_config, ReportBundle
    load_config()
    print("   ✅ Trainer and reports OK")

    print("\n✅ All imports successful!")
    print("\nℹ️  The toolkit is ready to use.")
    print("   Run 'python -m dprompt.main verify' to check the attention invariants.")

except ImportError as e:
    print(f"\n❌ Import error: {e}")
    sys.exit(1)
