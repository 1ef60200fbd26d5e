"""Controlled Camassa-Holm toolkit."""
