"""Scenario generation, Monte Carlo sweeps, export, plotting and the CLI."""
