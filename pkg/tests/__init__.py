"""Tests for dgcca."""
