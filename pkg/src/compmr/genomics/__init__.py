"""Desk-scale synthetic variant-calling experiment."""
