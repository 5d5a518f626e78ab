"""Tests for doorstate."""
