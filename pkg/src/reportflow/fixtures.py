"""Test and demo corpus: accounts, conversations, and messages.

F1 is the 12-message dispute between Alice (reporter) and Bob (reported):
odd messages are Bob's, even are Alice's, sent_at = 1000 * i, bodies
"body-<i>" except m3 ("meet me at 42 Elm St", Bob volunteering an address)
and m7 ("you are an idiot"). F2 is the impersonation bait: Carla, renamed
to "Bob", messaging Alice directly. The voice conversation carries a
30-second ephemeral window and starts empty.
"""

from __future__ import annotations

from .ephemeral import EphemeralWindow
from .model import Conversation, ConversationKind, Message, Role, UserProfile

REPORTER = "alice-9f27"
REPORTED = "bob-3e61"
IMPERSONATOR = "carla-7b14"
BYSTANDER = "wren-5d88"
MOD_PRIMARY = "mona-4c55"
MOD_CONFLICTED = "miko-8a02"  # participates in F1, so never assignable there
MOD_SENIOR = "sena-2f9c"
MOD_PLATFORM = "pia-6e33"

CONV_F1 = "conv-f1"
CONV_F2 = "conv-f2"
CONV_VOICE = "conv-voice"

MODERATOR_POOL = [MOD_PRIMARY, MOD_CONFLICTED, MOD_SENIOR]

ENDORSED_VALUES = {
    MOD_PRIMARY: ("transparency", "privacy-first"),
    MOD_CONFLICTED: ("community-first",),
    MOD_SENIOR: ("due-process",),
    MOD_PLATFORM: (),
}


def fixture_profiles() -> list[UserProfile]:
    member = frozenset({Role.MEMBER})
    return [
        UserProfile(REPORTER, "Alice", "avatar:alice", 400, member),
        UserProfile(REPORTED, "Bob", "avatar:bob", 300, member),
        # Carla mimics Bob's display name; only the account id tells them apart.
        UserProfile(IMPERSONATOR, "Bob", "avatar:carla", 900, member),
        UserProfile(BYSTANDER, "Wren", "avatar:wren", 500, member),
        UserProfile(MOD_PRIMARY, "Mona", "avatar:mona", 100,
                    frozenset({Role.MEMBER, Role.COMMUNITY_MODERATOR})),
        UserProfile(MOD_CONFLICTED, "Miko", "avatar:miko", 100,
                    frozenset({Role.MEMBER, Role.COMMUNITY_MODERATOR})),
        UserProfile(MOD_SENIOR, "Sena", "avatar:sena", 100,
                    frozenset({Role.MEMBER, Role.SENIOR_MODERATOR})),
        UserProfile(MOD_PLATFORM, "Pia", "avatar:pia", 100,
                    frozenset({Role.PLATFORM_MODERATOR})),
    ]


def fixture_conversations() -> list[Conversation]:
    return [
        Conversation(
            CONV_F1,
            ConversationKind.PRIVATE_GROUP,
            frozenset({REPORTER, REPORTED, BYSTANDER, MOD_CONFLICTED}),
        ),
        Conversation(CONV_F2, ConversationKind.DIRECT, frozenset({REPORTER, IMPERSONATOR})),
        Conversation(
            CONV_VOICE,
            ConversationKind.PRIVATE_GROUP,
            frozenset({REPORTER, REPORTED, BYSTANDER}),
            ephemeral_policy=EphemeralWindow(mode="seconds", n=30),
        ),
    ]


def f1_body(i: int) -> str:
    if i == 3:
        return "meet me at 42 Elm St"
    if i == 7:
        return "you are an idiot"
    return f"body-{i}"


def f1_messages() -> list[Message]:
    return [
        Message(
            msg_id=f"m{i}",
            conversation_id=CONV_F1,
            sender=REPORTED if i % 2 == 1 else REPORTER,
            sent_at=1000 * i,
            body=f1_body(i),
        )
        for i in range(1, 13)
    ]


def f2_messages() -> list[Message]:
    return [
        Message("n1", CONV_F2, IMPERSONATOR, 21000, "hey, it's Bob from the group"),
        Message("n2", CONV_F2, REPORTER, 22000, "oh hi Bob"),
        Message("n3", CONV_F2, IMPERSONATOR, 23000, "send me your account password"),
    ]


def fixture_messages() -> list[Message]:
    return f1_messages() + f2_messages()
