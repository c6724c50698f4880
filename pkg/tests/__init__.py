"""Tests for yoda-sr"""
