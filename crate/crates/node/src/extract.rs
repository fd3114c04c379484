//! `Json`, `Path` and `Query` extractors whose rejections are rendered by
//! the caller's own error type rather than axum's plain-text bodies.

macro_rules! extractors {
    ($err:ty, $from_msg:path) => {
        pub(crate) struct Json<T>(pub T);

        impl<T: serde::Serialize> axum::response::IntoResponse for Json<T> {
            fn into_response(self) -> axum::response::Response {
                axum::Json(self.0).into_response()
            }
        }

        #[axum::async_trait]
        impl<T: serde::de::DeserializeOwned, S: Send + Sync> axum::extract::FromRequest<S> for Json<T> {
            type Rejection = $err;

            async fn from_request(req: axum::extract::Request, state: &S) -> Result<Self, $err> {
                match axum::Json::<T>::from_request(req, state).await {
                    Ok(axum::Json(v)) => Ok(Json(v)),
                    Err(e) => Err($from_msg(e.body_text())),
                }
            }
        }

        pub(crate) struct Path<T>(pub T);

        #[axum::async_trait]
        impl<T: serde::de::DeserializeOwned + Send, S: Send + Sync> axum::extract::FromRequestParts<S> for Path<T> {
            type Rejection = $err;

            async fn from_request_parts(parts: &mut axum::http::request::Parts, state: &S) -> Result<Self, $err> {
                match axum::extract::Path::<T>::from_request_parts(parts, state).await {
                    Ok(axum::extract::Path(v)) => Ok(Path(v)),
                    Err(e) => Err($from_msg(e.body_text())),
                }
            }
        }

        #[allow(dead_code)]
        pub(crate) struct Query<T>(pub T);

        #[axum::async_trait]
        impl<T: serde::de::DeserializeOwned, S: Send + Sync> axum::extract::FromRequestParts<S> for Query<T> {
            type Rejection = $err;

            async fn from_request_parts(parts: &mut axum::http::request::Parts, state: &S) -> Result<Self, $err> {
                match axum::extract::Query::<T>::from_request_parts(parts, state).await {
                    Ok(axum::extract::Query(v)) => Ok(Query(v)),
                    Err(e) => Err($from_msg(e.body_text())),
                }
            }
        }
    };
}

pub(crate) use extractors;

pub(crate) mod api {
    super::extractors!(crate::ApiError, crate::error::bad_request);
}
