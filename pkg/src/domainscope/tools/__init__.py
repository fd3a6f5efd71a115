"""Operator tools for domainscope workspaces."""
