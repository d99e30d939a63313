"""Command line, profiles, transport and batch orchestration."""
