"""Tests for SemiStatic."""
