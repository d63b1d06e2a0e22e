"""Configuration, sweeps, presets and result files."""
