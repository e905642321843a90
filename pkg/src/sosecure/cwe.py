"""Short CWE names used as descriptions in the CWE+ prompt variant."""

from __future__ import annotations

from typing import Mapping, Optional

from .analyzer import normalize_cwe

CWE_NAMES = {
    "CWE-020": "Improper Input Validation",
    "CWE-022": "Improper Limitation of a Pathname to a Restricted Directory ('Path Traversal')",
    "CWE-077": "Improper Neutralization of Special Elements used in a Command ('Command Injection')",
    "CWE-078": "Improper Neutralization of Special Elements used in an OS Command ('OS Command Injection')",
    "CWE-079": "Improper Neutralization of Input During Web Page Generation ('Cross-site Scripting')",
    "CWE-089": "Improper Neutralization of Special Elements used in an SQL Command ('SQL Injection')",
    "CWE-090": "Improper Neutralization of Special Elements used in an LDAP Query ('LDAP Injection')",
    "CWE-094": "Improper Control of Generation of Code ('Code Injection')",
    "CWE-113": "Improper Neutralization of CRLF Sequences in HTTP Headers ('HTTP Request/Response Splitting')",
    "CWE-117": "Improper Output Neutralization for Logs",
    "CWE-119": "Improper Restriction of Operations within the Bounds of a Memory Buffer",
    "CWE-125": "Out-of-bounds Read",
    "CWE-190": "Integer Overflow or Wraparound",
    "CWE-200": "Exposure of Sensitive Information to an Unauthorized Actor",
    "CWE-209": "Generation of Error Message Containing Sensitive Information",
    "CWE-215": "Insertion of Sensitive Information Into Debugging Code",
    "CWE-269": "Improper Privilege Management",
    "CWE-287": "Improper Authentication",
    "CWE-295": "Improper Certificate Validation",
    "CWE-306": "Missing Authentication for Critical Function",
    "CWE-312": "Cleartext Storage of Sensitive Information",
    "CWE-326": "Inadequate Encryption Strength",
    "CWE-327": "Use of a Broken or Risky Cryptographic Algorithm",
    "CWE-328": "Use of Weak Hash",
    "CWE-352": "Cross-Site Request Forgery (CSRF)",
    "CWE-377": "Insecure Temporary File",
    "CWE-400": "Uncontrolled Resource Consumption",
    "CWE-416": "Use After Free",
    "CWE-434": "Unrestricted Upload of File with Dangerous Type",
    "CWE-476": "NULL Pointer Dereference",
    "CWE-502": "Deserialization of Untrusted Data",
    "CWE-601": "URL Redirection to Untrusted Site ('Open Redirect')",
    "CWE-611": "Improper Restriction of XML External Entity Reference",
    "CWE-643": "Improper Neutralization of Data within XPath Expressions ('XPath Injection')",
    "CWE-732": "Incorrect Permission Assignment for Critical Resource",
    "CWE-787": "Out-of-bounds Write",
    "CWE-798": "Use of Hard-coded Credentials",
    "CWE-862": "Missing Authorization",
    "CWE-863": "Incorrect Authorization",
    "CWE-916": "Use of Password Hash With Insufficient Computational Effort",
    "CWE-918": "Server-Side Request Forgery (SSRF)",
}


def describe(cwe: str, overrides: Optional[Mapping[str, str]] = None) -> Optional[str]:
    key = normalize_cwe(cwe)
    if overrides and key in overrides:
        return overrides[key]
    return CWE_NAMES.get(key)
