from .service import create_app
from .store import ListeningSession, MosResult, NotFoundError, Rating, RatingStore, SessionError
