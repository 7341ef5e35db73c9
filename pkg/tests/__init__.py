"""Tests for groundwave."""
