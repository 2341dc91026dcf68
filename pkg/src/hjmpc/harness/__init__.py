"""Experiment harness: scenarios, seeded sampling, batch rollouts, metrics and the CLI."""
